#pragma once

#include <Eigen/Dense>

#include "cde/error.hpp"

namespace cde {

// Conditional logistic regression for 1-to-1 matched pairs. The design matrix
// holds case-minus-control differences, one row per pair; the pair-conditional
// likelihood is prod_i sigma(coef . d_i). Matched-pair intercepts cancel.

struct ClogitParams {
  double delta = 0.0;    // exposure
  double eta = 0.0;      // mediator
  Eigen::VectorXd beta;  // covariates
};

struct ClogitOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
  int max_halvings = 30;
  double separation_bound = 30.0;
};

struct ClogitFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd covariance;  // inverse observed information at coef
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double score_norm = 0.0;  // max-norm of the score at coef

  /// Interprets coef as (delta, eta, beta...); needs at least two columns.
  ClogitParams params() const;
  Eigen::VectorXd standard_errors() const { return covariance.diagonal().cwiseSqrt(); }
};

double log_expit(double s);
double expit(double s);

double clogit_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef);
Eigen::VectorXd clogit_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef);
Eigen::MatrixXd clogit_hessian(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef);

/// Newton-Raphson from zero with step halving. Throws FitError on separation,
/// a singular information matrix, or exhausting the iteration budget.
ClogitFit clogit_fit(const Eigen::MatrixXd& design, const ClogitOptions& options = {});

}  // namespace cde
