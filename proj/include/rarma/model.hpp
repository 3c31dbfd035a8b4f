#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rarma/grid.hpp"
#include "rarma/link.hpp"

namespace rarma {

/// Lag offsets over {0..order}^2 minus (0,0), row-major:
/// (0,1), ..., (0,order), (1,0), (1,1), ..., (order,order).
inline std::vector<std::pair<int, int>> lag_offsets(int order) {
  if (order < 0) throw std::invalid_argument("lag_offsets: order must be >= 0");
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>((order + 1) * (order + 1) - 1));
  for (int i = 0; i <= order; ++i)
    for (int j = 0; j <= order; ++j)
      if (i != 0 || j != 0) out.emplace_back(i, j);
  return out;
}

struct ModelSpec {
  int p = 0;  // AR order
  int q = 0;  // MA order
  LinkType link = LinkType::Log;

  int w() const { return std::max(p, q); }
  int ar_count() const { return (p + 1) * (p + 1) - 1; }
  int ma_count() const { return (q + 1) * (q + 1) - 1; }
  int param_count() const { return 1 + ar_count() + ma_count(); }

  void validate() const {
    if (p < 0 || q < 0) throw std::invalid_argument("ModelSpec: orders must be >= 0");
  }
};

/// Parameters in the fixed flat layout used everywhere:
/// [beta | phi in lag_offsets(p) order | theta in lag_offsets(q) order].
struct ParamVector {
  double beta = 0.0;
  Eigen::VectorXd phi;
  Eigen::VectorXd theta;

  static ParamVector zeros(const ModelSpec& spec) {
    ParamVector g;
    g.phi = Eigen::VectorXd::Zero(spec.ar_count());
    g.theta = Eigen::VectorXd::Zero(spec.ma_count());
    return g;
  }

  static ParamVector from_flat(const Eigen::VectorXd& flat, const ModelSpec& spec) {
    if (flat.size() != spec.param_count())
      throw std::invalid_argument("ParamVector: flat vector has wrong length");
    ParamVector g;
    g.beta = flat[0];
    g.phi = flat.segment(1, spec.ar_count());
    g.theta = flat.segment(1 + spec.ar_count(), spec.ma_count());
    return g;
  }

  Eigen::VectorXd to_flat() const {
    Eigen::VectorXd flat(1 + phi.size() + theta.size());
    flat[0] = beta;
    flat.segment(1, phi.size()) = phi;
    flat.segment(1 + phi.size(), theta.size()) = theta;
    return flat;
  }

  void check_shape(const ModelSpec& spec) const {
    if (phi.size() != spec.ar_count() || theta.size() != spec.ma_count())
      throw std::invalid_argument("ParamVector: sizes do not match model orders");
  }
};

inline std::vector<std::string> param_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(spec.param_count()));
  names.emplace_back("beta");
  for (auto [i, j] : lag_offsets(spec.p))
    names.push_back("phi(" + std::to_string(i) + "," + std::to_string(j) + ")");
  for (auto [k, l] : lag_offsets(spec.q))
    names.push_back("theta(" + std::to_string(k) + "," + std::to_string(l) + ")");
  return names;
}

/// Linear predictor, conditional mean, and MA error over the grid. Border
/// cells (n < w or m < w, zero-based) carry err = 0 and undefined (NaN)
/// eta/mu; they are excluded from the likelihood and all outputs.
struct LatentGrids {
  Grid eta;
  Grid mu;
  Grid err;
  int w = 0;
};

/// Causal row-major sweep of the recursion
///   eta[n,m] = beta + sum phi(i,j) g(y[n-i,m-j]) + sum theta(k,l) e[n-k,m-l],
///   mu = g^{-1}(eta),  e = g(y) - g(mu),
/// with (0,0) terms absent and zero-seeded borders.
inline LatentGrids recurse_latents(const ImageGrid& y, const ModelSpec& spec,
                                   const ParamVector& gamma) {
  spec.validate();
  gamma.check_shape(spec);
  const int w = spec.w();
  const Eigen::Index N = y.rows(), M = y.cols();
  if (N <= w || M <= w)
    throw std::invalid_argument("recurse_latents: grid must be at least (w+1) x (w+1)");

  const LinkOps& ops = link_ops(spec.link);
  const auto ar = lag_offsets(spec.p);
  const auto ma = lag_offsets(spec.q);

  Grid gy(N, M);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < M; ++m) gy(n, m) = ops.apply(y(n, m));

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  LatentGrids lat;
  lat.w = w;
  lat.eta = Grid::Constant(N, M, nan);
  lat.mu = Grid::Constant(N, M, nan);
  lat.err = Grid::Zero(N, M);

  for (Eigen::Index n = w; n < N; ++n) {
    for (Eigen::Index m = w; m < M; ++m) {
      double eta = gamma.beta;
      for (std::size_t k = 0; k < ar.size(); ++k)
        eta += gamma.phi[static_cast<Eigen::Index>(k)] * gy(n - ar[k].first, m - ar[k].second);
      for (std::size_t k = 0; k < ma.size(); ++k)
        eta += gamma.theta[static_cast<Eigen::Index>(k)] * lat.err(n - ma[k].first, m - ma[k].second);
      const double mu = ops.inverse(eta);
      lat.eta(n, m) = eta;
      lat.mu(n, m) = mu;
      lat.err(n, m) = gy(n, m) - ops.apply(mu);
    }
  }
  return lat;
}

/// Fitted mean image: the mu grid restricted to interior cells,
/// dimensions (N-w) x (M-w).
inline Grid fitted_image(const LatentGrids& latents) {
  const Eigen::Index N = latents.mu.rows(), M = latents.mu.cols();
  return latents.mu.bottomRightCorner(N - latents.w, M - latents.w);
}

}  // namespace rarma
