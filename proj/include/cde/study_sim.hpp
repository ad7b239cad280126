#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cde/matched_data.hpp"

namespace cde {

enum class ExposureModel { binary, genotype };

/// Structural model over (W, U, X, Z, M, Y):
///   W   stratum in {0..n_strata-1}, uniform; enters every equation as w - (n_strata-1)/2
///   U   ~ N(u_w w, 1), latent
///   X   binary: Bernoulli(expit(logit(exposure_freq) + x_w w));
///       genotype: Binomial(2, same probability)
///   Z   ~ Bernoulli(expit(z_intercept + z_w w + z_u U + z_x X))
///   M   = m_intercept + m_w w + m_x X + m_z Z + m_sd N(0, 1)
///   Y   ~ Bernoulli(min(1, lambda0 exp(psi X + gamma (M - m_intercept) + y_w w + y_u U)))
/// lambda0 is set from the observational regime so that the cohort's mean
/// risk equals `prevalence`. Defaults give exp(psi) = 0.72 with a binary
/// exposure and collider bias through Z.
struct SimConfig {
  std::size_t cohort_size = 400000;
  std::uint64_t seed = 1;
  std::size_t n_pairs = 0;  // 0: every matchable case
  double prevalence = 0.005;
  int n_strata = 4;
  ExposureModel exposure = ExposureModel::binary;
  double exposure_freq = 0.35;
  double x_w = 0.2;
  double u_w = 0.25;
  double z_intercept = -0.5;
  double z_w = 0.3;
  double z_u = 1.5;
  double z_x = 1.0;
  double m_intercept = 26.0;
  double m_w = 0.5;
  double m_x = 1.5;
  double m_z = -2.0;
  double m_sd = 3.0;
  double psi = -0.3285040669720361;  // log(0.72)
  double gamma = 0.13976194237515863;  // log(1.15)
  double y_w = 0.2;
  double y_u = 1.0;
  double max_clip_fraction = 0.001;
  std::size_t min_pairs = 30;
};

/// No direct effect and no U -> Y path.
SimConfig null_scenario();

void validate(const SimConfig& config);
SimConfig parse_sim_config(std::string_view text);
std::string serialize_sim_config(const SimConfig& config);

/// do(X = x) and/or do(M = m).
struct Intervention {
  std::optional<double> x;
  std::optional<double> m;
};

struct Subject {
  int w = 0;
  double u = 0.0;
  double x = 0.0;
  double z = 0.0;
  double m = 0.0;
  double risk = 0.0;
  int y = 0;
};

/// Exogenous draws for one subject; the generator is a deterministic
/// function of these, which makes interventions counterfactually coupled.
struct SubjectNoise {
  int w = 0;
  double u = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double z = 0.0;
  double m = 0.0;
  double y = 0.0;
};

class Cohort {
 public:
  Cohort(SimConfig config, std::vector<SubjectNoise> noise, const Intervention& intervention = {});

  const std::vector<Subject>& subjects() const noexcept { return subjects_; }
  const SimConfig& config() const noexcept { return config_; }
  double baseline_risk() const noexcept { return baseline_risk_; }
  std::size_t clipped() const noexcept { return clipped_; }
  double prevalence() const;
  double mean_risk() const;

  /// Same subjects and noise under do(.); baseline risk stays that of the
  /// observational regime.
  Cohort intervene(const Intervention& intervention) const;

 private:
  SimConfig config_;
  std::vector<SubjectNoise> noise_;
  std::vector<Subject> subjects_;
  double baseline_risk_ = 0.0;
  std::size_t clipped_ = 0;
};

/// Generates in topological order W, U, X, Z, M, Y. Throws SimError when risk
/// clipping affects more than max_clip_fraction of subjects.
Cohort simulate_cohort(const SimConfig& config, const Intervention& intervention = {});

struct MatchedSample {
  MatchedDataset dataset;
  std::size_t dropped_cases = 0;
  std::vector<std::string> warnings;
};

/// Each selected case gets one control drawn uniformly without replacement
/// from the unaffected subjects of its W stratum. Selection reads only (Y, W).
MatchedSample sample_matched(const Cohort& cohort, const SimConfig& config);

/// Stream seeds: SplitMix64 of the base seed mixed with a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline constexpr std::string_view kRngName = "mt19937_64 seeded by splitmix64(seed, stream)";

struct ReplicateRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t n_pairs = 0;
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  double clogit_delta = 0.0;
  double eta_hat = 0.0;
  // Score terms dx exp(-psi x1 - gamma m1) at the true parameters.
  double identity_sum = 0.0;
  double identity_sum_sq = 0.0;
};

struct CalibrationReport {
  SimConfig config;
  std::vector<ReplicateRow> rows;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double mean_psi = 0.0;
  double bias_psi = 0.0;
  std::optional<double> empirical_sd;
  double mean_se = 0.0;
  std::optional<double> coverage;
  double mean_delta = 0.0;
  double bias_delta = 0.0;
  double mean_eta = 0.0;
  double identity_mean = 0.0;  // pooled over every pair of every replicate
  double identity_se = 0.0;
  std::size_t identity_pairs = 0;
};

/// Runs simulate -> sample -> estimate per replicate with derived seeds.
/// Failures are counted, never fatal. Results do not depend on `threads`.
CalibrationReport replicate_study(const SimConfig& config, std::size_t n_reps,
                                  std::size_t threads = 1);

/// Summary statistics recomputed from the rows' ok subset.
void summarize(CalibrationReport& report);

std::string calibration_csv(const CalibrationReport& report);
std::string render_text(const CalibrationReport& report);
std::string render_kv(const CalibrationReport& report);

}  // namespace cde
