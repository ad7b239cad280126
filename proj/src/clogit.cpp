#include "cde/clogit.hpp"

#include <cmath>
#include <string>

namespace cde {

namespace {

void check_finite(const Eigen::VectorXd& coef) {
  if (!coef.allFinite()) throw FitError("clogit: non-finite parameters");
}

void check_shape(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
  if (design.cols() != coef.size()) {
    throw FitError("clogit: parameter length " + std::to_string(coef.size()) +
                   " does not match design width " + std::to_string(design.cols()));
  }
}

}  // namespace

double log_expit(double s) {
  return s >= 0.0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
}

double expit(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

ClogitParams ClogitFit::params() const {
  if (coef.size() < 2) throw FitError("clogit: params() needs exposure and mediator columns");
  return {coef(0), coef(1), coef.tail(coef.size() - 2)};
}

double clogit_loglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
  check_shape(design, coef);
  check_finite(coef);
  const Eigen::VectorXd s = design * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) ll += log_expit(s(i));
  return ll;
}

Eigen::VectorXd clogit_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
  check_shape(design, coef);
  check_finite(coef);
  const Eigen::VectorXd s = design * coef;
  Eigen::VectorXd w(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) w(i) = expit(-s(i));
  return design.transpose() * w;
}

Eigen::MatrixXd clogit_hessian(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
  check_shape(design, coef);
  check_finite(coef);
  const Eigen::VectorXd s = design * coef;
  Eigen::VectorXd w(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) w(i) = expit(s(i)) * expit(-s(i));
  return -(design.transpose() * w.asDiagonal() * design);
}

ClogitFit clogit_fit(const Eigen::MatrixXd& design, const ClogitOptions& options) {
  const Eigen::Index p = design.cols();
  if (p == 0) throw FitError("clogit: empty design");
  if (design.rows() == 0) throw FitError("clogit: no pairs");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (design.col(j).cwiseAbs().maxCoeff() == 0.0) {
      throw FitError("clogit: nonidentified: column " + std::to_string(j) +
                     " has no within-pair variation");
    }
  }

  ClogitFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  fit.loglik = clogit_loglik(design, fit.coef);
  Eigen::VectorXd score = clogit_score(design, fit.coef);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::MatrixXd info = -clogit_hessian(design, fit.coef);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 1e-14 * info.diagonal().maxCoeff()).any()) {
      throw FitError("clogit: nonidentified: singular information matrix");
    }
    Eigen::VectorXd step = ldlt.solve(score);
    const double step_norm = step.lpNorm<Eigen::Infinity>();

    // Halve only on a decrease beyond rounding noise in the log-likelihood.
    const double slack = 1e-12 * (1.0 + std::abs(fit.loglik));
    Eigen::VectorXd next = fit.coef + step;
    double next_ll = clogit_loglik(design, next);
    for (int h = 0; h < options.max_halvings && next_ll < fit.loglik - slack; ++h) {
      step *= 0.5;
      next = fit.coef + step;
      next_ll = clogit_loglik(design, next);
    }
    fit.coef = next;
    fit.loglik = next_ll;
    fit.iterations = iter;
    score = clogit_score(design, fit.coef);
    const double score_norm = score.lpNorm<Eigen::Infinity>();

    // Monotone likelihood: coefficients run off while the score keeps
    // pushing outward.
    if (fit.coef.lpNorm<Eigen::Infinity>() > options.separation_bound &&
        score.dot(fit.coef) >= 0.0) {
      throw FitError("clogit: nonconvergence: separation");
    }
    // A small score alone is not enough: under separation it decays while
    // Newton steps stay of order one.
    if (step_norm < options.tolerance ||
        (score_norm < options.tolerance && step_norm < 1e-6)) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) {
    throw FitError("clogit: nonconvergence: " + std::to_string(options.max_iterations) +
                   " iterations exceeded");
  }
  fit.score_norm = score.lpNorm<Eigen::Infinity>();
  const Eigen::MatrixXd info = -clogit_hessian(design, fit.coef);
  fit.covariance = info.inverse();
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  return fit;
}

}  // namespace cde
