#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rarma/estimation.hpp"
#include "rarma/grid.hpp"
#include "rarma/inference.hpp"
#include "rarma/model.hpp"
#include "rarma/parallel.hpp"
#include "rarma/rayleigh.hpp"

namespace rarma {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Reproducible uniform stream; (seed, stream) pairs give independent
/// sequences, so replications can run in any order or in parallel.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    const std::uint64_t k1 = detail::splitmix64(s);
    engine_.seed(k1);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// Axis-aligned block whose pixels are planted at `ratio` times their local
/// conditional mean during generation (a solid bright target).
struct BlockAnomaly {
  Eigen::Index row0 = 0, col0 = 0, rows = 0, cols = 0;
  double ratio = 3.0;
};

namespace detail {

inline ImageGrid simulate_impl(const ModelSpec& spec, const ParamVector& gamma,
                               Eigen::Index rows, Eigen::Index cols, RngStream& rng,
                               int burn_in, const BlockAnomaly* block) {
  spec.validate();
  gamma.check_shape(spec);
  if (burn_in < 0) throw std::invalid_argument("simulate_field: burn_in must be >= 0");
  const int w = spec.w();
  if (rows <= w || cols <= w)
    throw std::invalid_argument("simulate_field: size must be at least (w+1) x (w+1)");

  const Eigen::Index N = rows + burn_in, M = cols + burn_in;
  const LinkOps& ops = link_ops(spec.link);
  const auto ar = lag_offsets(spec.p);
  const auto ma = lag_offsets(spec.q);
  const double mu_border = ops.inverse(gamma.beta);

  Grid yv(N, M), gy(N, M);
  Grid err = Grid::Zero(N, M);

  auto in_block = [&](Eigen::Index n, Eigen::Index m) {
    if (!block) return false;
    const Eigen::Index r = n - burn_in, c = m - burn_in;
    return r >= block->row0 && r < block->row0 + block->rows && c >= block->col0 &&
           c < block->col0 + block->cols;
  };

  // Row-major causal sweep: border cells draw from the mu = g^{-1}(beta)
  // fallback with zero error feedback; interior cells use the recursion on
  // already-generated values.
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      double mu;
      const bool border = n < w || m < w;
      if (border) {
        mu = mu_border;
      } else {
        double eta = gamma.beta;
        for (std::size_t k = 0; k < ar.size(); ++k)
          eta += gamma.phi[static_cast<Eigen::Index>(k)] * gy(n - ar[k].first, m - ar[k].second);
        for (std::size_t k = 0; k < ma.size(); ++k)
          eta += gamma.theta[static_cast<Eigen::Index>(k)] * err(n - ma[k].first, m - ma[k].second);
        mu = ops.inverse(eta);
      }
      double yval;
      if (in_block(n, m)) {
        yval = block->ratio * mu;
      } else {
        yval = rayleigh_quantile(rng.uniform01(), mu);
        if (yval <= 0.0) yval = 1e-300;  // u == 0 draw
      }
      yv(n, m) = yval;
      gy(n, m) = ops.apply(yval);
      err(n, m) = border ? 0.0 : gy(n, m) - ops.apply(mu);
    }
  }

  if (burn_in > 0) return ImageGrid(yv.bottomRightCorner(rows, cols));
  return ImageGrid(std::move(yv));
}

}  // namespace detail

/// Generate a field by the inversion method: at each cell compute mu from
/// the recursion, draw u ~ U(0,1), and set y = rayleigh_quantile(u, mu).
/// An optional burn-in margin of leading rows/columns is generated and
/// cropped.
inline ImageGrid simulate_field(const ModelSpec& spec, const ParamVector& gamma,
                                Eigen::Index rows, Eigen::Index cols, RngStream& rng,
                                int burn_in = 0) {
  return detail::simulate_impl(spec, gamma, rows, cols, rng, burn_in, nullptr);
}

/// Same sweep with a planted solid block at ratio x the local conditional
/// mean; the block coordinates refer to the final (cropped) frame.
inline ImageGrid simulate_field_with_anomaly(const ModelSpec& spec, const ParamVector& gamma,
                                             Eigen::Index rows, Eigen::Index cols,
                                             RngStream& rng, const BlockAnomaly& block,
                                             int burn_in = 0) {
  if (block.rows <= 0 || block.cols <= 0 || block.row0 < 0 || block.col0 < 0 ||
      block.row0 + block.rows > rows || block.col0 + block.cols > cols)
    throw std::invalid_argument("simulate_field_with_anomaly: block outside frame");
  return detail::simulate_impl(spec, gamma, rows, cols, rng, burn_in, &block);
}

struct Scenario {
  ModelSpec spec;
  ParamVector gamma_true;
  std::vector<std::pair<int, int>> sizes;  // (rows, cols)
  int replications = 1000;
  std::uint64_t seed = 1;
  int burn_in = 0;
  double ci_alpha = 0.05;
  FitOptions fit_options{};
};

/// RARMA(1,0): beta = -0.2031, phi = (0.4562, 0.4523, -0.1054).
inline Scenario scenario_rarma10() {
  Scenario s;
  s.spec = ModelSpec{1, 0};
  s.gamma_true = ParamVector::zeros(s.spec);
  s.gamma_true.beta = -0.2031;
  s.gamma_true.phi << 0.4562, 0.4523, -0.1054;
  s.sizes = {{10, 10}, {20, 20}, {40, 40}, {80, 80}};
  return s;
}

/// RARMA(1,1): beta = 0.3569, phi = (0.2155, 0.2032, 0.1500),
/// theta = (0.1529, 0.1744, 0.1998).
inline Scenario scenario_rarma11() {
  Scenario s;
  s.spec = ModelSpec{1, 1};
  s.gamma_true = ParamVector::zeros(s.spec);
  s.gamma_true.beta = 0.3569;
  s.gamma_true.phi << 0.2155, 0.2032, 0.1500;
  s.gamma_true.theta << 0.1529, 0.1744, 0.1998;
  s.sizes = {{10, 10}, {20, 20}, {40, 40}, {80, 80}};
  return s;
}

struct McSizeSummary {
  int rows = 0, cols = 0;
  Eigen::VectorXd mean;    // per parameter
  Eigen::VectorXd rb_pct;  // 100 (mean - gamma) / gamma
  Eigen::VectorXd mse;
  Eigen::VectorXd cr;      // CI coverage rate
  Eigen::VectorXd var;     // sample variance of the estimates
  Eigen::VectorXd mean_iinv_diag;  // mean over replications of diag I^{-1}
  int failures = 0;
  int used = 0;
  double total_abs_rb = 0.0;
  double total_mse = 0.0;
};

struct McSummary {
  std::vector<std::string> names;
  std::vector<McSizeSummary> by_size;
};

/// Simulate -> fit -> summarize for every size in the scenario. Replications
/// run in parallel on independent RNG streams; reductions are deterministic.
/// Fits that fail to converge (or whose information matrix cannot be
/// inverted) are counted and excluded from the summaries.
inline McSummary run_monte_carlo(const Scenario& sc) {
  sc.spec.validate();
  sc.gamma_true.check_shape(sc.spec);
  if (sc.replications < 1) throw std::invalid_argument("run_monte_carlo: replications must be >= 1");

  const int kappa = sc.spec.param_count();
  const Eigen::VectorXd truth = sc.gamma_true.to_flat();

  McSummary out;
  out.names = param_names(sc.spec);

  for (std::size_t si = 0; si < sc.sizes.size(); ++si) {
    const auto [rows, cols] = sc.sizes[si];
    const int R = sc.replications;

    Eigen::MatrixXd est(kappa, R);
    Eigen::MatrixXd covered(kappa, R);
    Eigen::MatrixXd iinv_diag(kappa, R);
    std::vector<char> ok(static_cast<std::size_t>(R), 0);

    parallel_for(static_cast<std::size_t>(R), [&](std::size_t r) {
      RngStream rng(sc.seed, static_cast<std::uint64_t>(si) * static_cast<std::uint64_t>(R) + r);
      const ImageGrid field = simulate_field(sc.spec, sc.gamma_true, rows, cols, rng, sc.burn_in);
      const FitResult fit = fit_cmle(field, sc.spec, sc.fit_options);
      if (!fit.converged) return;
      try {
        const ConfidenceIntervals ci = confidence_intervals(fit, sc.ci_alpha);
        const Eigen::VectorXd flat = fit.gamma_hat.to_flat();
        for (int i = 0; i < kappa; ++i) {
          est(i, static_cast<Eigen::Index>(r)) = flat[i];
          const auto& row = ci.rows[static_cast<std::size_t>(i)];
          covered(i, static_cast<Eigen::Index>(r)) =
              (row.lower <= truth[i] && truth[i] <= row.upper) ? 1.0 : 0.0;
          iinv_diag(i, static_cast<Eigen::Index>(r)) = row.se * row.se;
        }
        ok[r] = 1;
      } catch (const InferenceError&) {
        // singular information matrix: count as a failure
      }
    });

    McSizeSummary s;
    s.rows = rows;
    s.cols = cols;
    s.mean = Eigen::VectorXd::Zero(kappa);
    s.mse = Eigen::VectorXd::Zero(kappa);
    s.cr = Eigen::VectorXd::Zero(kappa);
    s.var = Eigen::VectorXd::Zero(kappa);
    s.mean_iinv_diag = Eigen::VectorXd::Zero(kappa);

    for (int r = 0; r < R; ++r) {
      if (!ok[static_cast<std::size_t>(r)]) {
        ++s.failures;
        continue;
      }
      ++s.used;
      s.mean += est.col(r);
      s.cr += covered.col(r);
      s.mean_iinv_diag += iinv_diag.col(r);
    }
    if (s.used > 0) {
      s.mean /= s.used;
      s.cr /= s.used;
      s.mean_iinv_diag /= s.used;
      for (int r = 0; r < R; ++r) {
        if (!ok[static_cast<std::size_t>(r)]) continue;
        const Eigen::VectorXd dev_truth = est.col(r) - truth;
        const Eigen::VectorXd dev_mean = est.col(r) - s.mean;
        s.mse += dev_truth.cwiseProduct(dev_truth);
        s.var += dev_mean.cwiseProduct(dev_mean);
      }
      s.mse /= s.used;
      s.var /= std::max(1, s.used - 1);
    }
    s.rb_pct = Eigen::VectorXd::Constant(kappa, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < kappa; ++i)
      if (truth[i] != 0.0) s.rb_pct[i] = 100.0 * (s.mean[i] - truth[i]) / truth[i];
    s.total_abs_rb = s.rb_pct.array().isFinite().select(s.rb_pct.array().abs(), 0.0).sum();
    s.total_mse = s.mse.sum();
    out.by_size.push_back(std::move(s));
  }
  return out;
}

}  // namespace rarma
