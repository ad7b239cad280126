#include "cde/study_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "cde/clogit.hpp"
#include "cde/gest.hpp"
#include "cde/kv.hpp"

namespace cde {

SimConfig null_scenario() {
  SimConfig c;
  c.psi = 0.0;
  c.y_u = 0.0;
  return c;
}

void validate(const SimConfig& c) {
  auto fail = [](const std::string& msg) { throw SimError("invalid simulation config: " + msg); };
  if (c.cohort_size < 2) fail("cohort_size must be at least 2");
  if (!(c.prevalence > 0.0 && c.prevalence < 1.0)) fail("prevalence must lie in (0, 1)");
  if (c.n_strata < 1) fail("n_strata must be positive");
  if (!(c.exposure_freq > 0.0 && c.exposure_freq < 1.0)) fail("exposure_freq must lie in (0, 1)");
  if (!(c.m_sd >= 0.0)) fail("m_sd must be nonnegative");
  if (!(c.max_clip_fraction >= 0.0)) fail("max_clip_fraction must be nonnegative");
  for (double v : {c.x_w, c.u_w, c.z_intercept, c.z_w, c.z_u, c.z_x, c.m_intercept, c.m_w, c.m_x,
                   c.m_z, c.psi, c.gamma, c.y_w, c.y_u}) {
    if (!std::isfinite(v)) fail("coefficients must be finite");
  }
}

namespace {

// Field table shared by the parser and serializer.
struct Field {
  const char* key;
  std::function<std::string(const SimConfig&)> get;
  std::function<bool(SimConfig&, const std::string&)> set;
};

template <typename T>
Field count_field(const char* key, T SimConfig::*member) {
  return {key, [member](const SimConfig& c) { return std::to_string(c.*member); },
          [member](SimConfig& c, const std::string& v) {
            if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) return false;
            try {
              c.*member = static_cast<T>(std::stoull(v));
            } catch (...) {
              return false;
            }
            return true;
          }};
}

Field real_field(const char* key, double SimConfig::*member) {
  return {key, [member](const SimConfig& c) { return format_double(c.*member); },
          [member](SimConfig& c, const std::string& v) { return parse_double(v, c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      count_field("cohort_size", &SimConfig::cohort_size),
      count_field("seed", &SimConfig::seed),
      count_field("n_pairs", &SimConfig::n_pairs),
      real_field("prevalence", &SimConfig::prevalence),
      {"n_strata", [](const SimConfig& c) { return std::to_string(c.n_strata); },
       [](SimConfig& c, const std::string& v) {
         double d = 0;
         if (!parse_double(v, d) || d != std::floor(d) || d < 1 || d > 1e6) return false;
         c.n_strata = static_cast<int>(d);
         return true;
       }},
      {"exposure",
       [](const SimConfig& c) {
         return std::string(c.exposure == ExposureModel::binary ? "binary" : "genotype");
       },
       [](SimConfig& c, const std::string& v) {
         if (v == "binary") {
           c.exposure = ExposureModel::binary;
         } else if (v == "genotype") {
           c.exposure = ExposureModel::genotype;
         } else {
           return false;
         }
         return true;
       }},
      real_field("exposure_freq", &SimConfig::exposure_freq),
      real_field("x_w", &SimConfig::x_w),
      real_field("u_w", &SimConfig::u_w),
      real_field("z_intercept", &SimConfig::z_intercept),
      real_field("z_w", &SimConfig::z_w),
      real_field("z_u", &SimConfig::z_u),
      real_field("z_x", &SimConfig::z_x),
      real_field("m_intercept", &SimConfig::m_intercept),
      real_field("m_w", &SimConfig::m_w),
      real_field("m_x", &SimConfig::m_x),
      real_field("m_z", &SimConfig::m_z),
      real_field("m_sd", &SimConfig::m_sd),
      real_field("psi", &SimConfig::psi),
      real_field("gamma", &SimConfig::gamma),
      real_field("y_w", &SimConfig::y_w),
      real_field("y_u", &SimConfig::y_u),
      real_field("max_clip_fraction", &SimConfig::max_clip_fraction),
      count_field("min_pairs", &SimConfig::min_pairs),
  };
  return table;
}

}  // namespace

SimConfig parse_sim_config(std::string_view text) {
  SimConfig c;
  for (const auto& [key, value] : parse_kv(text)) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw SimError("unknown config key '" + key + "'");
    if (!it->set(c, value)) throw SimError("bad value for '" + key + "': '" + value + "'");
  }
  validate(c);
  return c;
}

std::string serialize_sim_config(const SimConfig& c) {
  KvEntries kv;
  for (const auto& f : fields()) kv.emplace_back(f.key, f.get(c));
  return write_kv(kv);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(base) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

namespace {

constexpr std::uint64_t kCohortStream = 1;
constexpr std::uint64_t kMatchingStream = 2;
constexpr std::uint64_t kReplicateStreamBase = 1000;

double expit_(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double centred_stratum(const SimConfig& c, int w) {
  return static_cast<double>(w) - 0.5 * static_cast<double>(c.n_strata - 1);
}

// Subject values with `lin_pred` holding the log-risk offset from lambda0.
Subject structural(const SimConfig& c, const SubjectNoise& e, const Intervention& iv,
                   double& lin_pred) {
  Subject s;
  s.w = e.w;
  const double wc = centred_stratum(c, e.w);
  s.u = c.u_w * wc + e.u;
  const double px = expit_(std::log(c.exposure_freq / (1.0 - c.exposure_freq)) + c.x_w * wc);
  if (iv.x) {
    s.x = *iv.x;
  } else if (c.exposure == ExposureModel::binary) {
    s.x = e.x1 < px ? 1.0 : 0.0;
  } else {
    s.x = (e.x1 < px ? 1.0 : 0.0) + (e.x2 < px ? 1.0 : 0.0);
  }
  s.z = e.z < expit_(c.z_intercept + c.z_w * wc + c.z_u * s.u + c.z_x * s.x) ? 1.0 : 0.0;
  s.m = iv.m ? *iv.m : c.m_intercept + c.m_w * wc + c.m_x * s.x + c.m_z * s.z + c.m_sd * e.m;
  lin_pred = c.psi * s.x + c.gamma * (s.m - c.m_intercept) + c.y_w * wc + c.y_u * s.u;
  return s;
}

}  // namespace

Cohort::Cohort(SimConfig config, std::vector<SubjectNoise> noise, const Intervention& intervention)
    : config_(std::move(config)), noise_(std::move(noise)) {
  validate(config_);
  const std::size_t n = noise_.size();
  if (n == 0) throw SimError("empty cohort");
  subjects_.resize(n);
  std::vector<double> rel(n);

  auto evaluate = [&](const Intervention& iv) {
    for (std::size_t i = 0; i < n; ++i) {
      double lp = 0.0;
      subjects_[i] = structural(config_, noise_[i], iv, lp);
      rel[i] = std::exp(lp);
    }
  };

  evaluate({});
  double mean_rel = 0.0;
  for (double r : rel) mean_rel += r;
  mean_rel /= static_cast<double>(n);
  baseline_risk_ = config_.prevalence / mean_rel;
  if (intervention.x || intervention.m) evaluate(intervention);

  clipped_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double risk = baseline_risk_ * rel[i];
    if (risk > 1.0) {
      ++clipped_;
      risk = 1.0;
    }
    subjects_[i].risk = risk;
    subjects_[i].y = noise_[i].y < risk ? 1 : 0;
  }
  if (static_cast<double>(clipped_) > config_.max_clip_fraction * static_cast<double>(n)) {
    throw SimError("prevalence too high for log link: risk clipped for " +
                   std::to_string(clipped_) + " of " + std::to_string(n) + " subjects");
  }
}

double Cohort::prevalence() const {
  std::size_t cases = 0;
  for (const auto& s : subjects_) cases += static_cast<std::size_t>(s.y);
  return static_cast<double>(cases) / static_cast<double>(subjects_.size());
}

double Cohort::mean_risk() const {
  double sum = 0.0;
  for (const auto& s : subjects_) sum += s.risk;
  return sum / static_cast<double>(subjects_.size());
}

Cohort Cohort::intervene(const Intervention& intervention) const {
  return Cohort(config_, noise_, intervention);
}

Cohort simulate_cohort(const SimConfig& config, const Intervention& intervention) {
  validate(config);
  std::mt19937_64 rng(derive_seed(config.seed, kCohortStream));
  std::uniform_int_distribution<int> stratum(0, config.n_strata - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Every subject consumes the same draws in the same order whatever the
  // exposure model or intervention.
  std::vector<SubjectNoise> noise(config.cohort_size);
  for (auto& e : noise) {
    e.w = stratum(rng);
    e.u = normal(rng);
    e.x1 = unif(rng);
    e.x2 = unif(rng);
    e.z = unif(rng);
    e.m = normal(rng);
    e.y = unif(rng);
  }
  return Cohort(config, std::move(noise), intervention);
}

MatchedSample sample_matched(const Cohort& cohort, const SimConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, kMatchingStream));
  const auto& subjects = cohort.subjects();

  std::vector<std::size_t> cases;
  std::map<int, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (subjects[i].y == 1) {
      cases.push_back(i);
    } else {
      pools[subjects[i].w].push_back(i);
    }
  }
  std::shuffle(cases.begin(), cases.end(), rng);
  if (config.n_pairs > 0 && cases.size() > config.n_pairs) cases.resize(config.n_pairs);

  MatchedSample out;
  std::vector<MatchedPair> pairs;
  pairs.reserve(cases.size());
  for (std::size_t c : cases) {
    auto& pool = pools[subjects[c].w];
    if (pool.empty()) {
      ++out.dropped_cases;
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t j = pick(rng);
    const std::size_t k = pool[j];
    pool[j] = pool.back();
    pool.pop_back();

    const std::string id = "p" + std::to_string(pairs.size() + 1);
    auto record = [&](std::size_t i) {
      const Subject& s = subjects[i];
      return PairRecord{id, s.y, s.x, s.m, {s.z}};
    };
    pairs.push_back({record(c), record(k)});
  }
  if (out.dropped_cases > 0) {
    out.warnings.push_back(std::to_string(out.dropped_cases) +
                           " case(s) dropped: W stratum exhausted");
  }
  if (pairs.size() < config.min_pairs) {
    throw SimError("only " + std::to_string(pairs.size()) + " matched pairs (need " +
                   std::to_string(config.min_pairs) + ")");
  }
  out.dataset = MatchedDataset(std::move(pairs), {"z"}, "simulated; matched on W stratum");
  return out;
}

namespace {

ReplicateRow run_replicate(const SimConfig& base, std::size_t index) {
  ReplicateRow row;
  row.index = index;
  row.seed = derive_seed(base.seed, kReplicateStreamBase + index);
  SimConfig cfg = base;
  cfg.seed = row.seed;
  try {
    const Cohort cohort = simulate_cohort(cfg);
    const MatchedSample sample = sample_matched(cohort, cfg);
    const PairDifferences diffs = pair_differences(sample.dataset);
    row.n_pairs = diffs.size();
    for (Eigen::Index i = 0; i < diffs.design.rows(); ++i) {
      const double t = diffs.design(i, 0) *
                       std::exp(-cfg.psi * diffs.case_x(i) - cfg.gamma * diffs.case_m(i));
      row.identity_sum += t;
      row.identity_sum_sq += t * t;
    }
    const DirectEffectEstimate est = estimate_direct_effect(diffs);
    row.psi_hat = est.psi_hat;
    row.se = est.se;
    row.ci_low = est.ci_low;
    row.ci_high = est.ci_high;
    row.covered = est.ci_low <= cfg.psi && cfg.psi <= est.ci_high;
    row.clogit_delta = est.clogit.coef(0);
    row.eta_hat = est.eta_hat;
    row.ok = true;
  } catch (const Error& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

}  // namespace

void summarize(CalibrationReport& r) {
  const double truth = r.config.psi;
  r.n_ok = 0;
  r.n_failed = 0;
  double sum_psi = 0, sum_psi2 = 0, sum_se = 0, sum_delta = 0, sum_eta = 0;
  double id_sum = 0, id_sq = 0;
  std::size_t covered = 0, id_n = 0;
  for (const auto& row : r.rows) {
    if (!row.ok) {
      ++r.n_failed;
      continue;
    }
    ++r.n_ok;
    sum_psi += row.psi_hat;
    sum_psi2 += row.psi_hat * row.psi_hat;
    sum_se += row.se;
    sum_delta += row.clogit_delta;
    sum_eta += row.eta_hat;
    covered += row.covered ? 1 : 0;
    id_sum += row.identity_sum;
    id_sq += row.identity_sum_sq;
    id_n += row.n_pairs;
  }
  r.empirical_sd.reset();
  r.coverage.reset();
  if (r.n_ok == 0) return;
  const double k = static_cast<double>(r.n_ok);
  r.mean_psi = sum_psi / k;
  r.bias_psi = r.mean_psi - truth;
  r.mean_se = sum_se / k;
  r.mean_delta = sum_delta / k;
  r.bias_delta = r.mean_delta - truth;
  r.mean_eta = sum_eta / k;
  if (r.n_ok >= 2) {
    r.empirical_sd = std::sqrt(std::max(0.0, (sum_psi2 - k * r.mean_psi * r.mean_psi) / (k - 1.0)));
    r.coverage = static_cast<double>(covered) / k;
  }
  r.identity_pairs = id_n;
  if (id_n >= 2) {
    const double n = static_cast<double>(id_n);
    r.identity_mean = id_sum / n;
    const double var = std::max(0.0, (id_sq - n * r.identity_mean * r.identity_mean) / (n - 1.0));
    r.identity_se = std::sqrt(var / n);
  }
}

CalibrationReport replicate_study(const SimConfig& config, std::size_t n_reps,
                                  std::size_t threads) {
  validate(config);
  if (n_reps == 0) throw SimError("n_reps must be at least 1");
  CalibrationReport report;
  report.config = config;
  report.rows.resize(n_reps);

  threads = std::clamp<std::size_t>(threads, 1, n_reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_reps; i = next++) report.rows[i] = run_replicate(config, i);
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  summarize(report);
  return report;
}

std::string calibration_csv(const CalibrationReport& r) {
  std::string out =
      "replicate,seed,ok,n_pairs,psi_hat,se,ci_low,ci_high,covered,clogit_delta,eta_hat,error\n";
  for (const auto& row : r.rows) {
    std::string err = row.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out += std::to_string(row.index) + ',' + std::to_string(row.seed) + ',' +
           (row.ok ? "1" : "0") + ',' + std::to_string(row.n_pairs) + ',' +
           format_double(row.psi_hat) + ',' + format_double(row.se) + ',' +
           format_double(row.ci_low) + ',' + format_double(row.ci_high) + ',' +
           (row.covered ? "1" : "0") + ',' + format_double(row.clogit_delta) + ',' +
           format_double(row.eta_hat) + ',' + err + '\n';
  }
  return out;
}

std::string render_kv(const CalibrationReport& r) {
  KvEntries kv{{"n_reps", std::to_string(r.rows.size())},
               {"n_ok", std::to_string(r.n_ok)},
               {"n_failed", std::to_string(r.n_failed)},
               {"psi_true", format_double(r.config.psi)},
               {"mean_psi", format_double(r.mean_psi)},
               {"bias_psi", format_double(r.bias_psi)},
               {"mean_se", format_double(r.mean_se)},
               {"mean_clogit_delta", format_double(r.mean_delta)},
               {"bias_clogit_delta", format_double(r.bias_delta)},
               {"mean_eta", format_double(r.mean_eta)},
               {"identity_mean", format_double(r.identity_mean)},
               {"identity_se", format_double(r.identity_se)},
               {"rng", std::string(kRngName)}};
  if (r.empirical_sd) kv.emplace_back("empirical_sd", format_double(*r.empirical_sd));
  if (r.coverage) kv.emplace_back("coverage", format_double(*r.coverage));
  return write_kv(kv);
}

std::string render_text(const CalibrationReport& r) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "replicates: %zu (%zu ok, %zu failed)\n", r.rows.size(), r.n_ok,
                r.n_failed);
  out += buf;
  std::snprintf(buf, sizeof buf, "true psi: %.4f (RR %.3f)\n", r.config.psi, std::exp(r.config.psi));
  out += buf;
  std::snprintf(buf, sizeof buf, "G-estimate:   mean %.4f  bias %+.4f  mean SE %.4f\n", r.mean_psi,
                r.bias_psi, r.mean_se);
  out += buf;
  if (r.empirical_sd) {
    std::snprintf(buf, sizeof buf, "              empirical SD %.4f  SE/SD %.3f\n", *r.empirical_sd,
                  *r.empirical_sd > 0 ? r.mean_se / *r.empirical_sd : 0.0);
    out += buf;
  }
  if (r.coverage) {
    std::snprintf(buf, sizeof buf, "              CI coverage %.3f\n", *r.coverage);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "naive clogit: mean delta %.4f  bias %+.4f\n", r.mean_delta,
                r.bias_delta);
  out += buf;
  std::snprintf(buf, sizeof buf, "score identity at truth: mean %.3g  (MC SE %.3g, %zu pairs)\n",
                r.identity_mean, r.identity_se, r.identity_pairs);
  out += buf;
  out += "rng: " + std::string(kRngName) + "\n";
  return out;
}

}  // namespace cde
