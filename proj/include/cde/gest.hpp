#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cde/clogit.hpp"
#include "cde/matched_data.hpp"

namespace cde {

/// Parameter vector for the stacked estimating equations, ordered
/// (psi, delta, eta, beta...) in every matrix.
struct Theta {
  double psi = 0.0;
  double delta = 0.0;
  double eta = 0.0;
  Eigen::VectorXd beta;

  Eigen::VectorXd to_vector() const;
  static Theta from_vector(const Eigen::VectorXd& v);
};

inline constexpr double kExponentLimit = 700.0;

/// sum_i dx_i exp(-psi x1_i - eta m1_i), x1 and m1 the case member's values.
/// Throws FitError("score overflow") if any exponent exceeds kExponentLimit in magnitude.
double gest_score(const PairDifferences& data, double psi, double eta);

/// True when every case and control exposure is 0 or 1.
bool binary_exposure(const PairDifferences& data);

/// log(A/B) with A, B the exp(-eta m1) mass of pairs with dx = +1 and dx = -1.
/// Requires binary exposure.
double solve_psi_closed_form(const PairDifferences& data, double eta);

struct PsiSolverOptions {
  double relative_tolerance = 1e-13;  // |score| < tol * sum |terms|
  double bracket_tolerance = 1e-12;
  int max_expansions = 200;
  int max_iterations = 500;
};

/// Root of the score in psi by bracket expansion followed by Newton steps
/// safeguarded with bisection.
double solve_psi_numeric(const PairDifferences& data, double eta,
                         const PsiSolverOptions& options = {});

/// Closed form for binary exposure, numeric otherwise.
double solve_psi(const PairDifferences& data, double eta);

/// Rows are pairs; column 0 is the psi score term, the rest the clogit score
/// contribution d_i expit(-(delta, eta, beta) . d_i).
Eigen::MatrixXd stacked_u(const PairDifferences& data, const Theta& theta);

/// Sample average of dU_i/dtheta, assembled analytically.
Eigen::MatrixXd mean_u_jacobian(const PairDifferences& data, const Theta& theta);

/// (1/n) B^{-1} V B^{-T}, B the averaged Jacobian and V the sample covariance
/// (n - 1 divisor) of the U_i.
Eigen::MatrixXd sandwich_variance(const PairDifferences& data, const Theta& theta);

double normal_quantile(double p);

struct EstimateOptions {
  double ci_level = 0.95;
  std::optional<double> prevalence_hint;
  ClogitOptions clogit;
};

inline constexpr double kRareDiseasePrevalence = 0.05;

struct DirectEffectEstimate {
  double psi_hat = 0.0;
  double variance = 0.0;
  double se = 0.0;
  double ci_level = 0.95;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double rr = 1.0;
  double rr_ci_low = 1.0;
  double rr_ci_high = 1.0;
  double eta_hat = 0.0;
  std::size_t n_pairs = 0;
  std::vector<std::string> warnings;

  Theta theta;
  Eigen::MatrixXd covariance;  // full sandwich, theta ordering
  ClogitFit clogit;            // the first-stage (naive) fit
};

/// clogit fit -> psi root at eta-hat -> sandwich at theta-hat -> Wald interval.
/// Stage failures are rethrown as FitError prefixed with the stage name.
DirectEffectEstimate estimate_direct_effect(const PairDifferences& data,
                                            const EstimateOptions& options = {});
DirectEffectEstimate estimate_direct_effect(const MatchedDataset& dataset,
                                            const EstimateOptions& options = {});

/// `coef_names` label the clogit coefficients (exposure, mediator, covariates).
std::string render_text(const DirectEffectEstimate& est, const std::vector<std::string>& coef_names);
std::string render_kv(const DirectEffectEstimate& est, const std::vector<std::string>& coef_names);

}  // namespace cde
