#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rarma/estimation.hpp"
#include "rarma/grid.hpp"
#include "rarma/inference.hpp"
#include "rarma/model.hpp"
#include "rarma/rayleigh.hpp"
#include "rarma/specfun.hpp"

namespace rarma {

struct QuantileResiduals {
  Grid r;            // NaN on border cells
  long clamped = 0;  // CDF values clipped away from {0, 1}
};

/// r[n,m] = PhiInv(F_Y(y[n,m] | mu[n,m])) on interior cells. CDF values are
/// clamped to [1e-15, 1-1e-15] before the normal quantile; clamps are counted.
inline QuantileResiduals quantile_residuals(const ImageGrid& y, const LatentGrids& latents) {
  const Eigen::Index N = y.rows(), M = y.cols();
  if (latents.mu.rows() != N || latents.mu.cols() != M)
    throw std::invalid_argument("quantile_residuals: latents do not match the grid");
  QuantileResiduals out;
  out.r = Grid::Constant(N, M, std::numeric_limits<double>::quiet_NaN());
  const int w = latents.w;
  constexpr double lo = 1e-15, hi = 1.0 - 1e-15;
  for (Eigen::Index n = w; n < N; ++n) {
    for (Eigen::Index m = w; m < M; ++m) {
      double u = rayleigh_cdf(y(n, m), latents.mu(n, m));
      if (u < lo || u > hi) {
        u = std::clamp(u, lo, hi);
        ++out.clamped;
      }
      out.r(n, m) = std_normal_quantile(u);
    }
  }
  return out;
}

/// Control chart: bit set where |r| >= limit; border (NaN) cells stay clear.
inline Mask threshold_mask(const Grid& residuals, double limit = 3.0) {
  if (!(limit > 0.0)) throw std::invalid_argument("threshold_mask: limit must be > 0");
  const Eigen::Index N = residuals.rows(), M = residuals.cols();
  Mask mask(N, M);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index m = 0; m < M; ++m) {
      const double r = residuals(n, m);
      mask(n, m) = std::isfinite(r) && std::abs(r) >= limit;
    }
  return mask;
}

/// Counterclockwise quarter turn: an N x M grid maps to M x N with
/// out(i, j) = in(j, M-1-i). Applying it four times is the identity.
template <typename Derived>
auto rotate90(const Eigen::ArrayBase<Derived>& in) {
  using Plain = typename Derived::PlainObject;
  Plain out = in.transpose().colwise().reverse();
  return out;
}

template <typename Plain>
Plain rotate90_k(Plain grid, int k) {
  k = ((k % 4) + 4) % 4;
  for (int i = 0; i < k; ++i) grid = rotate90(grid);
  return grid;
}

enum class MorphKind { Erode, Dilate, Open, Close };

/// Binary morphology with an all-ones size x size square element (odd size).
struct MorphOp {
  MorphKind kind = MorphKind::Open;
  int size = 3;
};

namespace detail {

inline void check_element(int size) {
  if (size < 1 || size % 2 == 0)
    throw std::invalid_argument("morphology: structuring element must be odd-sized");
}

}  // namespace detail

// Out-of-frame cells are neutral for both operations (they never satisfy a
// dilation and never veto an erosion), which keeps erosion/dilation exact
// duals under complement on the finite frame.
inline Mask erode(const Mask& in, int size) {
  detail::check_element(size);
  const int h = size / 2;
  const Eigen::Index N = in.rows(), M = in.cols();
  Mask out(N, M);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      bool all = true;
      for (Eigen::Index a = std::max<Eigen::Index>(0, n - h); all && a <= std::min(N - 1, n + h); ++a)
        for (Eigen::Index b = std::max<Eigen::Index>(0, m - h); b <= std::min(M - 1, m + h); ++b)
          if (!in(a, b)) {
            all = false;
            break;
          }
      out(n, m) = all;
    }
  }
  return out;
}

inline Mask dilate(const Mask& in, int size) {
  detail::check_element(size);
  const int h = size / 2;
  const Eigen::Index N = in.rows(), M = in.cols();
  Mask out(N, M);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      bool any = false;
      for (Eigen::Index a = std::max<Eigen::Index>(0, n - h); !any && a <= std::min(N - 1, n + h); ++a)
        for (Eigen::Index b = std::max<Eigen::Index>(0, m - h); b <= std::min(M - 1, m + h); ++b)
          if (in(a, b)) {
            any = true;
            break;
          }
      out(n, m) = any;
    }
  }
  return out;
}

inline Mask morphology(const Mask& mask, const MorphOp& op) {
  switch (op.kind) {
    case MorphKind::Erode:
      return erode(mask, op.size);
    case MorphKind::Dilate:
      return dilate(mask, op.size);
    case MorphKind::Open:
      return dilate(erode(mask, op.size), op.size);
    case MorphKind::Close:
      return erode(dilate(mask, op.size), op.size);
  }
  throw std::logic_error("morphology: unknown op");
}

inline Mask morphology(Mask mask, const std::vector<MorphOp>& pipeline) {
  for (const auto& op : pipeline) mask = morphology(mask, op);
  return mask;
}

struct ComponentLabels {
  Eigen::ArrayXXi labels;  // 0 = background, 1..count = components
  int count = 0;
};

/// 8-connected components of the foreground.
inline ComponentLabels connected_components(const Mask& mask) {
  const Eigen::Index N = mask.rows(), M = mask.cols();
  ComponentLabels cl;
  cl.labels = Eigen::ArrayXXi::Zero(N, M);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      if (!mask(n, m) || cl.labels(n, m) != 0) continue;
      const int label = ++cl.count;
      stack.push_back({n, m});
      cl.labels(n, m) = label;
      while (!stack.empty()) {
        const auto [a, b] = stack.back();
        stack.pop_back();
        for (Eigen::Index da = -1; da <= 1; ++da)
          for (Eigen::Index db = -1; db <= 1; ++db) {
            const Eigen::Index na = a + da, nb = b + db;
            if (na < 0 || nb < 0 || na >= N || nb >= M) continue;
            if (mask(na, nb) && cl.labels(na, nb) == 0) {
              cl.labels(na, nb) = label;
              stack.push_back({na, nb});
            }
          }
      }
    }
  }
  return cl;
}

struct FitQuality {
  double mse = 0.0;
  double mape = 0.0;
};

/// MSE and MAPE between y and mu_hat over cells where mu_hat is defined.
inline FitQuality fit_quality(const ImageGrid& y, const Grid& mu_hat) {
  if (mu_hat.rows() != y.rows() || mu_hat.cols() != y.cols())
    throw std::invalid_argument("fit_quality: grids must be aligned");
  FitQuality fq;
  long count = 0;
  for (Eigen::Index n = 0; n < y.rows(); ++n)
    for (Eigen::Index m = 0; m < y.cols(); ++m) {
      const double mu = mu_hat(n, m);
      if (!std::isfinite(mu)) continue;
      const double diff = y(n, m) - mu;
      fq.mse += diff * diff;
      fq.mape += std::abs(diff) / y(n, m);
      ++count;
    }
  if (count > 0) {
    fq.mse /= count;
    fq.mape /= count;
  }
  return fq;
}

struct Rect {
  Eigen::Index row0 = 0, col0 = 0, rows = 0, cols = 0;
};

struct DetectOptions {
  double limit = 3.0;
  std::vector<MorphOp> morphology = {{MorphKind::Open, 3}, {MorphKind::Dilate, 7}};
  FitOptions fit{};
  double pfa = 0.05;
};

struct DetectionRotation {
  std::string direction;  // conditioning direction in the input frame
  FitResult fit;
  Grid residuals;      // in the input frame (re-aligned)
  long clamped = 0;
  Mask mask;           // thresholded, re-aligned to the input frame
  WaldReport wald;
  bool has_wald = false;
  bool used = false;   // converged and contributing to the union
};

struct DetectionReport {
  Mask mask;        // post-morphology
  Mask union_mask;  // pixel-wise union of the per-rotation masks
  std::array<DetectionRotation, 4> rotations;
  FitQuality quality;
  int components = 0;
  int converged_rotations = 0;
};

/// Four-rotation control-chart detector:
///   1. fit the model on the region of interest and on its three successive
///      90-degree rotations (same orders for all four directions);
///   2. for each rotation, run the fitted model one-step-ahead over the
///      correspondingly rotated full input (MA errors rebuilt in-sweep) and
///      chart the quantile residuals at +-limit;
///   3. re-align the four binary masks to the input frame, take their union,
///      and apply the morphology pipeline.
/// Rotations whose fit does not converge are recorded and skipped.
inline DetectionReport detect_anomalies(const ImageGrid& input, const Rect& roi,
                                        const ModelSpec& spec, const DetectOptions& opts = {}) {
  spec.validate();
  if (!(opts.limit > 0.0)) throw std::invalid_argument("detect_anomalies: limit must be > 0");
  if (roi.row0 < 0 || roi.col0 < 0 || roi.rows < 1 || roi.cols < 1 ||
      roi.row0 + roi.rows > input.rows() || roi.col0 + roi.cols > input.cols())
    throw std::invalid_argument("detect_anomalies: roi outside the input");
  const int w = spec.w();
  if (roi.rows <= w || roi.cols <= w ||
      (roi.rows - w) * (roi.cols - w) < spec.param_count())
    throw std::invalid_argument("detect_anomalies: roi too small for the model order");

  static const char* kDirections[4] = {"northwest", "northeast", "southeast", "southwest"};

  std::array<Grid, 4> roi_views;
  roi_views[0] = input.values().block(roi.row0, roi.col0, roi.rows, roi.cols);
  for (int k = 1; k < 4; ++k) roi_views[k] = rotate90(roi_views[k - 1]);

  DetectionReport rep;
  const auto subset = dependence_subset(spec);

  Grid rotated_input = input.values();
  for (int k = 0; k < 4; ++k) {
    if (k > 0) rotated_input = rotate90(rotated_input);
    DetectionRotation& rot = rep.rotations[static_cast<std::size_t>(k)];
    rot.direction = kDirections[k];
    rot.fit = fit_cmle(ImageGrid(roi_views[static_cast<std::size_t>(k)]), spec, opts.fit);

    if (!subset.empty()) {
      try {
        rot.wald = wald_test(rot.fit, subset, Eigen::VectorXd::Zero(subset.size()), opts.pfa);
        rot.has_wald = true;
      } catch (const InferenceError&) {
        rot.has_wald = false;
      }
    }

    const LatentGrids lat = recurse_latents(ImageGrid(rotated_input), spec, rot.fit.gamma_hat);
    QuantileResiduals qr = quantile_residuals(ImageGrid(rotated_input), lat);
    const Mask raw = threshold_mask(qr.r, opts.limit);
    rot.mask = rotate90_k(raw, (4 - k) % 4);
    rot.residuals = rotate90_k(qr.r, (4 - k) % 4);
    rot.clamped = qr.clamped;
    rot.used = rot.fit.converged;
    if (k == 0) rep.quality = fit_quality(input, lat.mu);
    if (rot.used) ++rep.converged_rotations;
  }

  rep.union_mask = Mask::Constant(input.rows(), input.cols(), false);
  for (const auto& rot : rep.rotations)
    if (rot.used) rep.union_mask = rep.union_mask || rot.mask;

  rep.mask = morphology(rep.union_mask, opts.morphology);
  rep.components = connected_components(rep.mask).count;
  return rep;
}

}  // namespace rarma
