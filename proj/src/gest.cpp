#include "cde/gest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "cde/kv.hpp"

namespace cde {

Eigen::VectorXd Theta::to_vector() const {
  Eigen::VectorXd v(3 + beta.size());
  v << psi, delta, eta, beta;
  return v;
}

Theta Theta::from_vector(const Eigen::VectorXd& v) {
  if (v.size() < 3) throw FitError("theta needs at least (psi, delta, eta)");
  return {v(0), v(1), v(2), v.tail(v.size() - 3)};
}

namespace {

double exponent(double psi, double eta, double x1, double m1) {
  const double e = -psi * x1 - eta * m1;
  if (!std::isfinite(e) || std::abs(e) > kExponentLimit) throw FitError("score overflow");
  return e;
}

void check_theta(const PairDifferences& data, const Theta& theta) {
  if (static_cast<std::size_t>(theta.beta.size()) != data.covariate_count()) {
    throw FitError("theta has " + std::to_string(theta.beta.size()) + " covariate coefficients, data has " +
                   std::to_string(data.covariate_count()));
  }
  if (!theta.to_vector().allFinite()) throw FitError("non-finite theta");
}

// Score terms scaled by exp(-max exponent) so that nothing overflows; the
// scaling is positive, so the sign and root of the score are unchanged.
struct ScaledScore {
  double value = 0.0;       // sum of scaled terms
  double abs_sum = 0.0;     // sum of |scaled terms|
  double derivative = 0.0;  // sum of -x1 * scaled terms
};

ScaledScore scaled_score(const PairDifferences& data, double psi, double eta) {
  const auto n = data.design.rows();
  double emax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.design(i, 0) != 0.0) {
      emax = std::max(emax, -psi * data.case_x(i) - eta * data.case_m(i));
    }
  }
  ScaledScore s;
  if (!std::isfinite(emax)) return s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = data.design(i, 0);
    if (dx == 0.0) continue;
    const double t = dx * std::exp(-psi * data.case_x(i) - eta * data.case_m(i) - emax);
    s.value += t;
    s.abs_sum += std::abs(t);
    s.derivative -= data.case_x(i) * t;
  }
  return s;
}

void require_sign_variation(const PairDifferences& data) {
  const auto dx = data.dx();
  if (!(dx.maxCoeff() > 0.0 && dx.minCoeff() < 0.0)) {
    throw FitError("nonidentified: exposure difference has no sign variation");
  }
}

}  // namespace

double gest_score(const PairDifferences& data, double psi, double eta) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.design.rows(); ++i) {
    const double dx = data.design(i, 0);
    const double e = exponent(psi, eta, data.case_x(i), data.case_m(i));
    if (dx != 0.0) sum += dx * std::exp(e);
  }
  return sum;
}

bool binary_exposure(const PairDifferences& data) {
  auto binary = [](const Eigen::VectorXd& v) {
    return ((v.array() == 0.0) || (v.array() == 1.0)).all();
  };
  return binary(data.case_x) && binary(data.control_x);
}

double solve_psi_closed_form(const PairDifferences& data, double eta) {
  if (!binary_exposure(data)) throw FitError("closed-form psi needs a binary exposure");
  require_sign_variation(data);
  // log-sum-exp over each arm keeps A/B finite for any eta.
  std::vector<double> plus, minus;
  for (Eigen::Index i = 0; i < data.design.rows(); ++i) {
    const double dx = data.design(i, 0);
    if (dx > 0.0) plus.push_back(-eta * data.case_m(i));
    if (dx < 0.0) minus.push_back(-eta * data.case_m(i));
  }
  auto lse = [](const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double e : v) s += std::exp(e - mx);
    return mx + std::log(s);
  };
  return lse(plus) - lse(minus);
}

double solve_psi_numeric(const PairDifferences& data, double eta, const PsiSolverOptions& options) {
  require_sign_variation(data);
  if (!std::isfinite(eta)) throw FitError("non-finite eta");

  auto converged = [&](const ScaledScore& s) {
    return std::abs(s.value) < options.relative_tolerance * s.abs_sum;
  };

  double lo = -1.0;
  double hi = 1.0;
  ScaledScore f_lo = scaled_score(data, lo, eta);
  ScaledScore f_hi = scaled_score(data, hi, eta);
  if (converged(f_lo)) return lo;
  if (converged(f_hi)) return hi;
  int expansions = 0;
  while ((f_lo.value > 0.0) == (f_hi.value > 0.0)) {
    if (++expansions > options.max_expansions) {
      throw FitError("no root in expanded bracket");
    }
    lo *= 2.0;
    hi *= 2.0;
    f_lo = scaled_score(data, lo, eta);
    f_hi = scaled_score(data, hi, eta);
    if (converged(f_lo)) return lo;
    if (converged(f_hi)) return hi;
  }

  const bool lo_positive = f_lo.value > 0.0;
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const ScaledScore f = scaled_score(data, x, eta);
    if (converged(f)) return x;
    if ((f.value > 0.0) == lo_positive) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo < options.bracket_tolerance) return 0.5 * (lo + hi);
    double next = f.derivative != 0.0 ? x - f.value / f.derivative : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

double solve_psi(const PairDifferences& data, double eta) {
  return binary_exposure(data) ? solve_psi_closed_form(data, eta) : solve_psi_numeric(data, eta);
}

Eigen::MatrixXd stacked_u(const PairDifferences& data, const Theta& theta) {
  check_theta(data, theta);
  const auto n = data.design.rows();
  const auto p = data.design.cols();
  Eigen::VectorXd coef(p);
  coef << theta.delta, theta.eta, theta.beta;
  Eigen::MatrixXd u(n, 1 + p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = exponent(theta.psi, theta.eta, data.case_x(i), data.case_m(i));
    u(i, 0) = data.design(i, 0) * std::exp(e);
    const double s = data.design.row(i).dot(coef);
    u.row(i).tail(p) = data.design.row(i) * expit(-s);
  }
  return u;
}

Eigen::MatrixXd mean_u_jacobian(const PairDifferences& data, const Theta& theta) {
  check_theta(data, theta);
  const auto n = data.design.rows();
  const auto p = data.design.cols();
  if (n == 0) throw FitError("no pairs");
  Eigen::VectorXd coef(p);
  coef << theta.delta, theta.eta, theta.beta;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(1 + p, 1 + p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = exponent(theta.psi, theta.eta, data.case_x(i), data.case_m(i));
    const double u1 = data.design(i, 0) * std::exp(e);
    jac(0, 0) -= data.case_x(i) * u1;
    jac(0, 2) -= data.case_m(i) * u1;
    const double s = data.design.row(i).dot(coef);
    const double w = expit(s) * expit(-s);
    jac.bottomRightCorner(p, p).noalias() -=
        w * data.design.row(i).transpose() * data.design.row(i);
  }
  return jac / static_cast<double>(n);
}

Eigen::MatrixXd sandwich_variance(const PairDifferences& data, const Theta& theta) {
  const Eigen::MatrixXd u = stacked_u(data, theta);
  const auto n = u.rows();
  if (n < 2) throw FitError("variance unavailable: fewer than two pairs");
  const Eigen::MatrixXd bread = mean_u_jacobian(data, theta);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
  if (!lu.isInvertible()) throw FitError("variance unavailable: singular bread matrix");
  const Eigen::MatrixXd bread_inv = lu.inverse();

  const Eigen::MatrixXd centred = u.rowwise() - u.colwise().mean();
  const Eigen::MatrixXd meat = centred.transpose() * centred / static_cast<double>(n - 1);
  Eigen::MatrixXd cov = bread_inv * meat * bread_inv.transpose() / static_cast<double>(n);
  return 0.5 * (cov + cov.transpose());
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw FitError("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

namespace {

template <typename F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string prefix = std::string(stage) + ": ";
    const std::string msg = e.what();
    throw FitError(msg.rfind(prefix, 0) == 0 ? msg : prefix + msg);
  }
}

}  // namespace

DirectEffectEstimate estimate_direct_effect(const PairDifferences& data,
                                            const EstimateOptions& options) {
  if (!(options.ci_level > 0.0 && options.ci_level < 1.0)) {
    throw FitError("ci level must lie in (0, 1)");
  }
  DirectEffectEstimate est;
  est.n_pairs = data.size();
  est.ci_level = options.ci_level;

  est.clogit = staged("clogit", [&] { return clogit_fit(data.design, options.clogit); });
  const ClogitParams cp = est.clogit.params();
  est.eta_hat = cp.eta;
  est.psi_hat = staged("solve", [&] { return solve_psi(data, cp.eta); });
  est.theta = {est.psi_hat, cp.delta, cp.eta, cp.beta};
  est.covariance = staged("variance", [&] { return sandwich_variance(data, est.theta); });

  est.variance = std::max(0.0, est.covariance(0, 0));
  est.se = std::sqrt(est.variance);
  const double z = normal_quantile(0.5 + 0.5 * options.ci_level);
  est.ci_low = est.psi_hat - z * est.se;
  est.ci_high = est.psi_hat + z * est.se;
  est.rr = std::exp(est.psi_hat);
  est.rr_ci_low = std::exp(est.ci_low);
  est.rr_ci_high = std::exp(est.ci_high);

  if (options.prevalence_hint && *options.prevalence_hint > kRareDiseasePrevalence) {
    est.warnings.push_back("rare-disease assumption questionable: prevalence hint " +
                           format_double(*options.prevalence_hint) + " exceeds " +
                           format_double(kRareDiseasePrevalence));
  }
  return est;
}

DirectEffectEstimate estimate_direct_effect(const MatchedDataset& dataset,
                                            const EstimateOptions& options) {
  return estimate_direct_effect(pair_differences(dataset), options);
}

namespace {

struct CoefRow {
  std::string name;
  double coef, se, odds_ratio, lo, hi, p;
};

std::vector<CoefRow> clogit_table(const DirectEffectEstimate& est,
                                  const std::vector<std::string>& names, double z) {
  std::vector<CoefRow> rows;
  const Eigen::VectorXd se = est.clogit.standard_errors();
  for (Eigen::Index j = 0; j < est.clogit.coef.size(); ++j) {
    const double b = est.clogit.coef(j);
    const double s = se(j);
    const auto name = static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                 : "coef" + std::to_string(j);
    rows.push_back({name, b, s, std::exp(b), std::exp(b - z * s), std::exp(b + z * s),
                    std::erfc(std::abs(b / s) / std::sqrt(2.0))});
  }
  return rows;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_text(const DirectEffectEstimate& est, const std::vector<std::string>& names) {
  const double z = normal_quantile(0.5 + 0.5 * est.ci_level);
  const auto pct = fixed(100.0 * est.ci_level, 0) + "%";
  std::string out;
  out += "controlled direct effect (G-estimation), " + std::to_string(est.n_pairs) + " pairs\n";
  out += "  psi_hat  " + fixed(est.psi_hat) + "  se " + fixed(est.se) + "  " + pct + " CI (" +
         fixed(est.ci_low) + ", " + fixed(est.ci_high) + ")\n";
  out += "  relative risk  " + fixed(est.rr, 3) + "  " + pct + " CI (" + fixed(est.rr_ci_low, 3) +
         ", " + fixed(est.rr_ci_high, 3) + ")\n";
  out += "  eta_hat (mediator, from clogit)  " + fixed(est.eta_hat) + "\n";
  out += "\nconditional logistic regression (naive)\n";
  out += "  term                 coef        se        OR    CI low   CI high   p-value\n";
  for (const auto& r : clogit_table(est, names, z)) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-16s %9.4f %9.4f %9.3f %9.3f %9.3f %9.3g\n",
                  r.name.c_str(), r.coef, r.se, r.odds_ratio, r.lo, r.hi, r.p);
    out += line;
  }
  for (const auto& w : est.warnings) out += "warning: " + w + "\n";
  return out;
}

std::string render_kv(const DirectEffectEstimate& est, const std::vector<std::string>& names) {
  const double z = normal_quantile(0.5 + 0.5 * est.ci_level);
  std::string warnings;
  for (const auto& w : est.warnings) warnings += (warnings.empty() ? "" : "; ") + w;
  KvEntries kv{{"psi_hat", format_double(est.psi_hat)},
               {"se", format_double(est.se)},
               {"ci_level", format_double(est.ci_level)},
               {"ci_low", format_double(est.ci_low)},
               {"ci_high", format_double(est.ci_high)},
               {"rr", format_double(est.rr)},
               {"rr_ci_low", format_double(est.rr_ci_low)},
               {"rr_ci_high", format_double(est.rr_ci_high)},
               {"eta_hat", format_double(est.eta_hat)},
               {"n_pairs", std::to_string(est.n_pairs)},
               {"warnings", warnings}};
  for (const auto& r : clogit_table(est, names, z)) {
    kv.emplace_back("clogit." + r.name + ".coef", format_double(r.coef));
    kv.emplace_back("clogit." + r.name + ".se", format_double(r.se));
    kv.emplace_back("clogit." + r.name + ".p", format_double(r.p));
  }
  return write_kv(kv);
}

}  // namespace cde
