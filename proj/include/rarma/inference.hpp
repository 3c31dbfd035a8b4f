#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rarma/estimation.hpp"
#include "rarma/specfun.hpp"

namespace rarma {

/// Raised when a Fisher matrix (or an interest partition of its inverse)
/// cannot be inverted.
struct InferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Expected (conditional) Fisher information at gamma: the block Gram form
/// {a, P, R}^T W {a, P, R} with W = diag{(4/mu^2)(dmu/deta)^2} over interior
/// cells. With the log link every W entry equals 4.
inline Eigen::MatrixXd fisher_info(const ImageGrid& y, const ModelSpec& spec,
                                   const ParamVector& gamma) {
  return detail::CmleEvaluator(y, spec).fisher(gamma);
}

namespace detail {

constexpr double kConditionWarn = 1e10;

inline Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& A, const char* what,
                                  bool* ill_conditioned = nullptr) {
  if (A.rows() != A.cols() || A.rows() == 0) throw InferenceError(std::string(what) + ": empty or non-square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw InferenceError(std::string(what) + ": eigendecomposition failed");
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi))
    throw InferenceError(std::string(what) + ": matrix is singular or not positive definite");
  if (ill_conditioned) *ill_conditioned = hi / lo > kConditionWarn;
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

struct WaldReport {
  double statistic = 0.0;
  int df = 0;
  double threshold = 0.0;  // chi2 quantile at 1 - pfa
  double p_value = 1.0;
  bool reject = false;
  bool ill_conditioned = false;
};

/// Wald statistic for H0: gamma[subset] = gamma0, using the interest-block
/// partition of the INVERSE information matrix (extract rows/columns of
/// I^{-1}, then invert that sub-block; this is not the inverse of a sub-block
/// of I).
inline WaldReport wald_test(const FitResult& fit, const std::vector<int>& subset,
                            const Eigen::VectorXd& gamma0, double pfa = 0.05) {
  if (subset.empty()) throw std::invalid_argument("wald_test: subset must be nonempty");
  if (!(pfa > 0.0) || !(pfa < 1.0)) throw std::invalid_argument("wald_test: pfa must be in (0,1)");
  const int kappa = fit.spec.param_count();
  if (gamma0.size() != static_cast<Eigen::Index>(subset.size()))
    throw std::invalid_argument("wald_test: gamma0 length must match subset");
  for (int idx : subset)
    if (idx < 0 || idx >= kappa) throw std::invalid_argument("wald_test: subset index out of range");

  WaldReport rep;
  const Eigen::MatrixXd iinv = detail::invert_spd(fit.fisher, "wald_test (Fisher)", &rep.ill_conditioned);

  const int nu = static_cast<int>(subset.size());
  Eigen::MatrixXd block(nu, nu);
  Eigen::VectorXd diff(nu);
  const Eigen::VectorXd flat = fit.gamma_hat.to_flat();
  for (int a = 0; a < nu; ++a) {
    diff[a] = flat[subset[a]] - gamma0[a];
    for (int b = 0; b < nu; ++b) block(a, b) = iinv(subset[a], subset[b]);
  }
  bool block_ill = false;
  const Eigen::MatrixXd block_inv = detail::invert_spd(block, "wald_test (interest partition)", &block_ill);
  rep.ill_conditioned = rep.ill_conditioned || block_ill;

  rep.statistic = std::max(0.0, diff.dot(block_inv * diff));
  rep.df = nu;
  rep.threshold = chi2_quantile(1.0 - pfa, nu);
  rep.p_value = 1.0 - chi2_cdf(rep.statistic, nu);
  rep.reject = rep.statistic > rep.threshold;
  return rep;
}

/// Indices of all phi and theta entries in the flat layout (the dependence
/// block tested by the overall significance Wald test).
inline std::vector<int> dependence_subset(const ModelSpec& spec) {
  std::vector<int> idx;
  for (int i = 1; i < spec.param_count(); ++i) idx.push_back(i);
  return idx;
}

struct IntervalRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct ConfidenceIntervals {
  double alpha = 0.05;
  std::vector<IntervalRow> rows;
  bool ill_conditioned = false;
};

/// Symmetric per-parameter intervals estimate +- z_{1-alpha/2} se, with
/// se(gamma_i) = sqrt([I^{-1}]_ii).
inline ConfidenceIntervals confidence_intervals(const FitResult& fit, double alpha = 0.05) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("confidence_intervals: alpha must be in (0,1)");
  ConfidenceIntervals ci;
  ci.alpha = alpha;
  const Eigen::MatrixXd iinv = detail::invert_spd(fit.fisher, "confidence_intervals", &ci.ill_conditioned);
  const double z = std_normal_quantile(1.0 - alpha / 2.0);
  const Eigen::VectorXd flat = fit.gamma_hat.to_flat();
  const auto names = param_names(fit.spec);
  for (int i = 0; i < fit.spec.param_count(); ++i) {
    IntervalRow row;
    row.name = names[static_cast<std::size_t>(i)];
    row.estimate = flat[i];
    row.se = std::sqrt(iinv(i, i));
    row.lower = row.estimate - z * row.se;
    row.upper = row.estimate + z * row.se;
    ci.rows.push_back(row);
  }
  return ci;
}

struct InfoCriteria {
  double aic = 0.0;
  double sic = 0.0;
};

/// AIC = -2 l + 2 kappa, SIC = -2 l + kappa log(N M),
/// kappa = (p+1)^2 + (q+1)^2 - 1.
inline InfoCriteria information_criteria(const FitResult& fit, Eigen::Index rows,
                                         Eigen::Index cols) {
  const double kappa = fit.spec.param_count();
  InfoCriteria ic;
  ic.aic = -2.0 * fit.loglik + 2.0 * kappa;
  ic.sic = -2.0 * fit.loglik + kappa * std::log(static_cast<double>(rows * cols));
  return ic;
}

}  // namespace rarma
