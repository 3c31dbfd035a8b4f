#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rarma/grid.hpp"
#include "rarma/link.hpp"
#include "rarma/model.hpp"

namespace rarma {

/// Derivative grids dEta/dGamma, one grid per parameter, zero-seeded on the
/// border. Each grid obeys the same MA-feedback recursion as eta itself.
struct EtaGradientState {
  Grid dbeta;
  std::vector<Grid> dphi;
  std::vector<Grid> dtheta;
};

struct FitOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;   // on max |score| / interior cell count
  double step_tol = 1e-10;  // on relative step length
};

struct FitResult {
  ModelSpec spec;
  ParamVector gamma_hat;
  double loglik = -std::numeric_limits<double>::infinity();
  double score_norm = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd fisher;
  Grid mu_hat;  // full-size grid, NaN on border cells
  bool converged = false;
  int iterations = 0;
  bool init_fallback = false;          // OLS design was rank deficient
  std::vector<double> loglik_trace;    // per accepted iterate
  Eigen::Index rows = 0, cols = 0;
  long interior_count = 0;
};

namespace detail {

// Shared sweep machinery for likelihood, score, gradient grids, and the
// Fisher design. Precomputes g(y) once.
class CmleEvaluator {
 public:
  CmleEvaluator(const ImageGrid& y, const ModelSpec& spec)
      : spec_(spec),
        ops_(link_ops(spec.link)),
        ar_(lag_offsets(spec.p)),
        ma_(lag_offsets(spec.q)),
        y_(y.values()),
        N_(y.rows()),
        M_(y.cols()),
        w_(spec.w()) {
    spec_.validate();
    if (N_ <= w_ || M_ <= w_)
      throw std::invalid_argument("fit: grid must be at least (w+1) x (w+1)");
    gy_.resize(N_, M_);
    for (Eigen::Index n = 0; n < N_; ++n)
      for (Eigen::Index m = 0; m < M_; ++m) gy_(n, m) = ops_.apply(y_(n, m));
  }

  long interior_count() const { return static_cast<long>((N_ - w_) * (M_ - w_)); }
  const Grid& gy() const { return gy_; }
  const ModelSpec& spec() const { return spec_; }
  Eigen::Index rows() const { return N_; }
  Eigen::Index cols() const { return M_; }

  double loglik(const ParamVector& gamma) const {
    return evaluate(gamma, nullptr, nullptr, nullptr);
  }

  double loglik_and_score(const ParamVector& gamma, Eigen::VectorXd& score) const {
    return evaluate(gamma, &score, nullptr, nullptr);
  }

  /// Expected information I = D^T W D with W = diag{(4/mu^2)(dmu/deta)^2}
  /// over interior cells and D = [dEta/dBeta | dEta/dPhi | dEta/dTheta].
  Eigen::MatrixXd fisher(const ParamVector& gamma) const {
    Eigen::MatrixXd info;
    evaluate(gamma, nullptr, &info, nullptr);
    return info;
  }

  double loglik_with_latents(const ParamVector& gamma, LatentGrids& latents) const {
    return evaluate(gamma, nullptr, nullptr, &latents);
  }

 private:
  // One causal sweep computing the conditional log-likelihood and, on demand,
  // the analytic score, the expected information, and the latent grids.
  double evaluate(const ParamVector& gamma, Eigen::VectorXd* score,
                  Eigen::MatrixXd* info, LatentGrids* latents_out) const {
    gamma.check_shape(spec_);
    const int na = static_cast<int>(ar_.size());
    const int nb = static_cast<int>(ma_.size());
    const int kappa = 1 + na + nb;
    const bool need_grads = score != nullptr || info != nullptr;

    Grid err = Grid::Zero(N_, M_);
    Grid mu_grid;
    Grid eta_grid;
    if (latents_out) {
      constexpr double nan = std::numeric_limits<double>::quiet_NaN();
      eta_grid = Grid::Constant(N_, M_, nan);
      mu_grid = Grid::Constant(N_, M_, nan);
    }

    // Derivative grids, flat layout [beta | phi | theta].
    std::vector<Grid> deta;
    if (need_grads) deta.assign(static_cast<std::size_t>(kappa), Grid::Zero(N_, M_));
    if (score) score->setZero(kappa);
    if (info) info->setZero(kappa, kappa);
    Eigen::VectorXd drow(kappa);

    constexpr double pi = std::numbers::pi;
    const double c0 = std::log(pi / 2.0);
    double ll = 0.0;

    for (Eigen::Index n = w_; n < N_; ++n) {
      for (Eigen::Index m = w_; m < M_; ++m) {
        double eta = gamma.beta;
        for (int k = 0; k < na; ++k)
          eta += gamma.phi[k] * gy_(n - ar_[k].first, m - ar_[k].second);
        for (int k = 0; k < nb; ++k)
          eta += gamma.theta[k] * err(n - ma_[k].first, m - ma_[k].second);

        const double mu = ops_.inverse(eta);
        const double gmu = ops_.apply(mu);
        err(n, m) = gy_(n, m) - gmu;
        if (latents_out) {
          eta_grid(n, m) = eta;
          mu_grid(n, m) = mu;
        }

        const double ratio = y_(n, m) / mu;
        ll += c0 + gy_(n, m) - 2.0 * gmu - 0.25 * pi * ratio * ratio;

        if (need_grads) {
          // dEta/dBeta = 1 - sum theta(s,t) dEta[n-s,m-t]/dBeta, and the
          // analogous recursions for phi (lagged g(y) forcing) and theta
          // (lagged MA error forcing).
          double db = 1.0;
          for (int s = 0; s < nb; ++s)
            db -= gamma.theta[s] * deta[0](n - ma_[s].first, m - ma_[s].second);
          deta[0](n, m) = db;
          drow[0] = db;
          for (int k = 0; k < na; ++k) {
            double d = gy_(n - ar_[k].first, m - ar_[k].second);
            for (int s = 0; s < nb; ++s)
              d -= gamma.theta[s] * deta[1 + k](n - ma_[s].first, m - ma_[s].second);
            deta[1 + k](n, m) = d;
            drow[1 + k] = d;
          }
          for (int k = 0; k < nb; ++k) {
            double d = err(n - ma_[k].first, m - ma_[k].second);
            for (int s = 0; s < nb; ++s)
              d -= gamma.theta[s] * deta[1 + na + k](n - ma_[s].first, m - ma_[s].second);
            deta[1 + na + k](n, m) = d;
            drow[1 + na + k] = d;
          }

          const double dmu_deta = 1.0 / ops_.deriv(mu);
          if (score) {
            const double dl_dmu = 0.5 * pi * y_(n, m) * y_(n, m) / (mu * mu * mu) - 2.0 / mu;
            score->noalias() += (dl_dmu * dmu_deta) * drow;
          }
          if (info) {
            const double wcell = 4.0 * (dmu_deta / mu) * (dmu_deta / mu);
            info->selfadjointView<Eigen::Lower>().rankUpdate(drow, wcell);
          }
        }
      }
    }

    if (info) *info = info->selfadjointView<Eigen::Lower>();
    if (latents_out) {
      latents_out->eta = std::move(eta_grid);
      latents_out->mu = std::move(mu_grid);
      latents_out->err = std::move(err);
      latents_out->w = w_;
    }
    if (!std::isfinite(ll)) return -std::numeric_limits<double>::infinity();
    return ll;
  }

  ModelSpec spec_;
  const LinkOps& ops_;
  std::vector<std::pair<int, int>> ar_;
  std::vector<std::pair<int, int>> ma_;
  Grid y_;
  Eigen::Index N_, M_;
  int w_;
  Grid gy_;
};

}  // namespace detail

/// Conditional log-likelihood given the w = max(p,q) preliminary rows and
/// columns. Returns -infinity when the recursion produces nonfinite means
/// (the optimizer treats such evaluations as rejected steps).
inline double conditional_loglik(const ImageGrid& y, const ModelSpec& spec,
                                 const ParamVector& gamma) {
  return detail::CmleEvaluator(y, spec).loglik(gamma);
}

/// All dEta/dGamma recursion grids, zero-seeded on the border.
inline EtaGradientState eta_gradients(const ImageGrid& y, const ModelSpec& spec,
                                      const ParamVector& gamma) {
  spec.validate();
  gamma.check_shape(spec);
  const LatentGrids lat = recurse_latents(y, spec, gamma);
  const auto ar = lag_offsets(spec.p);
  const auto ma = lag_offsets(spec.q);
  const Eigen::Index N = y.rows(), M = y.cols();
  const int w = spec.w();
  const LinkOps& ops = link_ops(spec.link);

  Grid gy(N, M);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < M; ++m) gy(n, m) = ops.apply(y(n, m));

  EtaGradientState st;
  st.dbeta = Grid::Zero(N, M);
  st.dphi.assign(ar.size(), Grid::Zero(N, M));
  st.dtheta.assign(ma.size(), Grid::Zero(N, M));

  for (Eigen::Index n = w; n < N; ++n) {
    for (Eigen::Index m = w; m < M; ++m) {
      double db = 1.0;
      for (std::size_t s = 0; s < ma.size(); ++s)
        db -= gamma.theta[static_cast<Eigen::Index>(s)] *
              st.dbeta(n - ma[s].first, m - ma[s].second);
      st.dbeta(n, m) = db;
      for (std::size_t k = 0; k < ar.size(); ++k) {
        double d = gy(n - ar[k].first, m - ar[k].second);
        for (std::size_t s = 0; s < ma.size(); ++s)
          d -= gamma.theta[static_cast<Eigen::Index>(s)] *
               st.dphi[k](n - ma[s].first, m - ma[s].second);
        st.dphi[k](n, m) = d;
      }
      for (std::size_t k = 0; k < ma.size(); ++k) {
        double d = lat.err(n - ma[k].first, m - ma[k].second);
        for (std::size_t s = 0; s < ma.size(); ++s)
          d -= gamma.theta[static_cast<Eigen::Index>(s)] *
               st.dtheta[k](n - ma[s].first, m - ma[s].second);
        st.dtheta[k](n, m) = d;
      }
    }
  }
  return st;
}

/// Analytic score U(gamma) = dl/dGamma in the flat parameter layout.
inline Eigen::VectorXd score(const ImageGrid& y, const ModelSpec& spec,
                             const ParamVector& gamma) {
  Eigen::VectorXd s;
  detail::CmleEvaluator(y, spec).loglik_and_score(gamma, s);
  return s;
}

/// OLS initialization: regress g(y[n,m]) on an intercept plus the lagged
/// g(y[n-i,m-j]) in the phi flattening order over interior cells; theta = 0.
/// A rank-deficient design falls back to beta = mean g(y), phi = 0.
inline ParamVector initial_values(const ImageGrid& y, const ModelSpec& spec,
                                  bool* rank_fallback = nullptr) {
  spec.validate();
  const int w = spec.w();
  const Eigen::Index N = y.rows(), M = y.cols();
  if (N <= w || M <= w)
    throw std::invalid_argument("initial_values: grid must be at least (w+1) x (w+1)");

  const LinkOps& ops = link_ops(spec.link);
  const auto ar = lag_offsets(spec.p);
  const Eigen::Index n_int = (N - w) * (M - w);
  const Eigen::Index k = 1 + static_cast<Eigen::Index>(ar.size());

  Grid gy(N, M);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < M; ++m) gy(n, m) = ops.apply(y(n, m));

  Eigen::VectorXd z(n_int);
  Eigen::MatrixXd X(n_int, k);
  Eigen::Index row = 0;
  for (Eigen::Index n = w; n < N; ++n) {
    for (Eigen::Index m = w; m < M; ++m, ++row) {
      z[row] = gy(n, m);
      X(row, 0) = 1.0;
      for (std::size_t c = 0; c < ar.size(); ++c)
        X(row, 1 + static_cast<Eigen::Index>(c)) = gy(n - ar[c].first, m - ar[c].second);
    }
  }

  ParamVector gamma = ParamVector::zeros(spec);
  if (rank_fallback) *rank_fallback = false;
  bool fallback = n_int < k;
  Eigen::VectorXd b;
  if (!fallback) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < k)
      fallback = true;
    else
      b = qr.solve(z);
  }
  if (fallback) {
    gamma.beta = z.mean();
    if (rank_fallback) *rank_fallback = true;
    return gamma;
  }
  gamma.beta = b[0];
  gamma.phi = b.segment(1, spec.ar_count());
  return gamma;
}

/// Conditional maximum likelihood via BFGS with the analytic score and a
/// backtracking line search (sufficient decrease, nonfinite steps rejected).
inline FitResult fit_cmle(const ImageGrid& y, const ModelSpec& spec,
                          const FitOptions& opts = {},
                          const std::optional<ParamVector>& start = std::nullopt) {
  detail::CmleEvaluator eval(y, spec);
  const int kappa = spec.param_count();
  const long n_int = eval.interior_count();

  FitResult res;
  res.spec = spec;
  res.rows = y.rows();
  res.cols = y.cols();
  res.interior_count = n_int;

  Eigen::VectorXd x;
  if (start) {
    start->check_shape(spec);
    x = start->to_flat();
  } else {
    x = initial_values(y, spec, &res.init_fallback).to_flat();
  }

  Eigen::VectorXd g(kappa);
  double ll = eval.loglik_and_score(ParamVector::from_flat(x, spec), g);
  if (!std::isfinite(ll)) {
    // Last-resort start: intercept at the mean of g(y), everything else zero.
    ParamVector flat0 = ParamVector::zeros(spec);
    flat0.beta = eval.gy().bottomRightCorner(y.rows() - spec.w(), y.cols() - spec.w()).mean();
    x = flat0.to_flat();
    ll = eval.loglik_and_score(ParamVector::from_flat(x, spec), g);
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(kappa, kappa);
  res.loglik_trace.push_back(ll);

  bool converged = false;
  int it = 0;
  constexpr double c1 = 1e-4;
  bool first_update = true;

  while (it < opts.max_iter) {
    if (std::isfinite(ll) && g.cwiseAbs().maxCoeff() <= opts.grad_tol * n_int) {
      converged = true;
      break;
    }
    ++it;

    // Minimize f = -ll: descent direction for f is -H * (-g) = H g.
    Eigen::VectorXd d = H * g;
    if (d.dot(g) <= 0.0) {  // not an ascent direction for ll; reset
      H.setIdentity();
      d = g;
    }

    double t = 1.0;
    double ll_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    Eigen::VectorXd g_new(kappa);
    const double slope = d.dot(g);
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      x_new = x + t * d;
      ll_new = eval.loglik_and_score(ParamVector::from_flat(x_new, spec), g_new);
      if (std::isfinite(ll_new) && ll_new >= ll + c1 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // line search failure: keep best iterate

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yk = -(g_new - g);  // gradient change of f = -ll
    const double sy = s.dot(yk);
    if (first_update && sy > 0.0) {
      H *= sy / yk.squaredNorm();
      first_update = false;
    }
    if (sy > 1e-12 * s.norm() * yk.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * yk;
      H -= rho * (s * Hy.transpose() + Hy * s.transpose());
      H += rho * rho * (yk.dot(Hy) + sy) * (s * s.transpose());
    }

    const double step_rel = s.cwiseAbs().maxCoeff() / std::max(1.0, x.cwiseAbs().maxCoeff());
    x = x_new;
    ll = ll_new;
    g = g_new;
    res.loglik_trace.push_back(ll);
    if (step_rel < opts.step_tol) {
      converged = true;
      break;
    }
  }
  if (it >= opts.max_iter && !converged) converged = false;

  res.gamma_hat = ParamVector::from_flat(x, spec);
  res.loglik = ll;
  res.score_norm = g.cwiseAbs().maxCoeff() / static_cast<double>(n_int);
  res.converged = converged && std::isfinite(ll);
  res.iterations = it;
  res.fisher = eval.fisher(res.gamma_hat);
  LatentGrids lat;
  eval.loglik_with_latents(res.gamma_hat, lat);
  res.mu_hat = std::move(lat.mu);
  return res;
}

}  // namespace rarma
