#include <doctest.h>

#include <rarma/estimation.hpp>
#include <rarma/simulation.hpp>

#include <cmath>
#include <numbers>

using rarma::Grid;
using rarma::ImageGrid;
using rarma::ModelSpec;
using rarma::ParamVector;

namespace {

double fd_loglik_derivative(const ImageGrid& y, const ModelSpec& spec,
                            const Eigen::VectorXd& flat, int i, double h) {
  Eigen::VectorXd up = flat, down = flat;
  up[i] += h;
  down[i] -= h;
  return (rarma::conditional_loglik(y, spec, ParamVector::from_flat(up, spec)) -
          rarma::conditional_loglik(y, spec, ParamVector::from_flat(down, spec))) /
         (2.0 * h);
}

}  // namespace

TEST_CASE("single interior cell log-likelihood") {
  // 2x2 grid of ones, p=q=1 with zero coefficients: one interior cell with
  // y = 1 and mu = e^0 = 1.
  const ModelSpec spec{1, 1};
  const ParamVector g = ParamVector::zeros(spec);
  const double ll = rarma::conditional_loglik(ImageGrid(Grid::Ones(2, 2)), spec, g);
  CHECK(std::abs(ll - (-0.3338154581079934)) < 1e-14);
}

TEST_CASE("constant-mean stationary point") {
  const ModelSpec spec{0, 0};
  rarma::RngStream rng(31);
  Grid g(12, 9);
  for (Eigen::Index n = 0; n < 12; ++n)
    for (Eigen::Index m = 0; m < 9; ++m)
      g(n, m) = rarma::rayleigh_quantile(rng.uniform01(), 1.4);
  const ImageGrid y(g);

  // dl/dmu = 0 at mu^2 = pi sum(y^2) / (4 count)
  const double mu2 = std::numbers::pi * g.square().sum() / (4.0 * g.size());
  const double beta_star = 0.5 * std::log(mu2);

  ParamVector at = ParamVector::zeros(spec);
  at.beta = beta_star;
  CHECK(std::abs(rarma::score(y, spec, at)[0]) < 1e-9);

  // and the optimizer lands there
  const auto fit = rarma::fit_cmle(y, spec);
  CHECK(fit.converged);
  CHECK(std::abs(fit.gamma_hat.beta - beta_star) < 1e-8);

  // the log-likelihood is lower on both sides
  ParamVector off = at;
  off.beta = beta_star + 0.05;
  CHECK(rarma::conditional_loglik(y, spec, off) < fit.loglik);
  off.beta = beta_star - 0.05;
  CHECK(rarma::conditional_loglik(y, spec, off) < fit.loglik);
}

TEST_CASE("doubling amplitudes relabels the stationary point") {
  auto sc = rarma::scenario_rarma10();
  rarma::RngStream rng(8);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 20, 20, rng);
  const auto fit1 = rarma::fit_cmle(y, sc.spec);
  const ImageGrid y2(2.0 * y.values());
  const auto fit2 = rarma::fit_cmle(y2, sc.spec);
  REQUIRE(fit1.converged);
  REQUIRE(fit2.converged);

  // exact reparametrization: beta' = beta + ln2 (1 - sum phi), phi unchanged
  const double expected_shift = std::log(2.0) * (1.0 - fit1.gamma_hat.phi.sum());
  CHECK(std::abs(fit2.gamma_hat.beta - fit1.gamma_hat.beta - expected_shift) < 1e-5);
  CHECK((fit2.gamma_hat.phi - fit1.gamma_hat.phi).cwiseAbs().maxCoeff() < 1e-5);

  // for p = q = 0 the shift is exactly ln 2
  const ModelSpec flat{0, 0};
  const auto f1 = rarma::fit_cmle(y, flat);
  const auto f2 = rarma::fit_cmle(y2, flat);
  CHECK(std::abs(f2.gamma_hat.beta - f1.gamma_hat.beta - std::log(2.0)) < 1e-7);
}

TEST_CASE("eta gradients collapse when theta is zero") {
  const ModelSpec spec{1, 0};
  ParamVector g = ParamVector::zeros(spec);
  g.beta = -0.2;
  g.phi << 0.4, 0.45, -0.1;
  rarma::RngStream rng(17);
  const ImageGrid y = rarma::simulate_field(spec, g, 8, 8, rng);
  const auto grads = rarma::eta_gradients(y, spec, g);
  const auto ar = rarma::lag_offsets(1);
  for (Eigen::Index n = 1; n < 8; ++n)
    for (Eigen::Index m = 1; m < 8; ++m) {
      CHECK(grads.dbeta(n, m) == 1.0);
      for (std::size_t k = 0; k < ar.size(); ++k)
        CHECK(grads.dphi[k](n, m) ==
              std::log(y(n - ar[k].first, m - ar[k].second)));
    }
}

TEST_CASE("eta gradients match finite differences for rarma(1,1)") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(23);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 6, 6, rng);
  const auto grads = rarma::eta_gradients(y, sc.spec, sc.gamma_true);
  const Eigen::VectorXd flat = sc.gamma_true.to_flat();
  const double h = 1e-6;

  for (int i = 0; i < flat.size(); ++i) {
    Eigen::VectorXd up = flat, down = flat;
    up[i] += h;
    down[i] -= h;
    const auto lat_up = rarma::recurse_latents(y, sc.spec, ParamVector::from_flat(up, sc.spec));
    const auto lat_dn = rarma::recurse_latents(y, sc.spec, ParamVector::from_flat(down, sc.spec));
    for (Eigen::Index n = 1; n < 6; ++n)
      for (Eigen::Index m = 1; m < 6; ++m) {
        const double fd = (lat_up.eta(n, m) - lat_dn.eta(n, m)) / (2.0 * h);
        double an;
        if (i == 0)
          an = grads.dbeta(n, m);
        else if (i <= 3)
          an = grads.dphi[static_cast<std::size_t>(i - 1)](n, m);
        else
          an = grads.dtheta[static_cast<std::size_t>(i - 4)](n, m);
        CHECK(std::abs(an - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
      }
  }
}

TEST_CASE("score matches finite differences in both reference scenarios") {
  for (auto sc : {rarma::scenario_rarma10(), rarma::scenario_rarma11()}) {
    rarma::RngStream rng(41);
    const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 20, 20, rng);
    const Eigen::VectorXd flat = sc.gamma_true.to_flat();
    const Eigen::VectorXd an = rarma::score(y, sc.spec, sc.gamma_true);
    for (int i = 0; i < flat.size(); ++i) {
      const double fd = fd_loglik_derivative(y, sc.spec, flat, i, 1e-6);
      CHECK(std::abs(an[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("score has mean zero at the truth" * doctest::timeout(120)) {
  auto sc = rarma::scenario_rarma10();
  const int reps = 200;
  const int kappa = sc.spec.param_count();
  Eigen::MatrixXd scores(kappa, reps);
  for (int r = 0; r < reps; ++r) {
    rarma::RngStream rng(99, static_cast<std::uint64_t>(r));
    const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 40, 40, rng);
    scores.col(r) = rarma::score(y, sc.spec, sc.gamma_true);
  }
  for (int i = 0; i < kappa; ++i) {
    const double mean = scores.row(i).mean();
    const double sd = std::sqrt((scores.row(i).array() - mean).square().sum() / (reps - 1));
    CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(static_cast<double>(reps)));
  }
}

TEST_CASE("ols initial values") {
  // degenerate constant field falls back
  const ModelSpec spec{1, 0};
  bool fallback = false;
  const auto init = rarma::initial_values(ImageGrid(Grid::Constant(6, 6, 2.5)), spec, &fallback);
  CHECK(fallback);
  CHECK(std::abs(init.beta - std::log(2.5)) < 1e-12);
  CHECK(init.phi.cwiseAbs().maxCoeff() == 0.0);

  // pure AR data: OLS lands in a sane band around the truth
  auto sc = rarma::scenario_rarma10();
  rarma::RngStream rng(55);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 80, 80, rng);
  bool fb = true;
  const auto ols = rarma::initial_values(y, sc.spec, &fb);
  CHECK_FALSE(fb);
  CHECK((ols.phi - sc.gamma_true.phi).cwiseAbs().maxCoeff() < 0.1);

  // theta starts at zero
  const ModelSpec spec11{1, 1};
  const auto init11 = rarma::initial_values(y, spec11);
  CHECK(init11.theta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit recovers scenario parameters on one large field") {
  auto sc = rarma::scenario_rarma10();
  rarma::RngStream rng(4242);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 80, 80, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.converged);
  CHECK(fit.score_norm <= rarma::FitOptions{}.grad_tol);
  const Eigen::VectorXd err = fit.gamma_hat.to_flat() - sc.gamma_true.to_flat();
  CHECK(err.cwiseAbs().maxCoeff() < 0.08);
}

TEST_CASE("log-likelihood never decreases along the optimizer path") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(77);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 30, 30, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.loglik_trace.size() > 1);
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
    CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1]);
}

TEST_CASE("refit of data simulated from the fitted model returns the estimates") {
  auto sc = rarma::scenario_rarma10();
  rarma::RngStream rng(3033);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 40, 40, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.converged);

  rarma::RngStream rng2(3034);
  const ImageGrid regen = rarma::simulate_field(sc.spec, fit.gamma_hat, 100, 100, rng2);
  const auto refit = rarma::fit_cmle(regen, sc.spec);
  REQUIRE(refit.converged);
  // within a generous CI-scale band at 100x100 (sd ~ 0.01)
  CHECK((refit.gamma_hat.to_flat() - fit.gamma_hat.to_flat()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("estimation is invariant to transposing the grid") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(606);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 30, 30, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  const auto fit_t = rarma::fit_cmle(ImageGrid(y.values().transpose().eval()), sc.spec);
  REQUIRE(fit.converged);
  REQUIRE(fit_t.converged);
  CHECK(std::abs(fit.gamma_hat.beta - fit_t.gamma_hat.beta) < 1e-5);
  // (i,j) <-> (j,i): for order 1 that swaps the first two entries
  CHECK(std::abs(fit.gamma_hat.phi[0] - fit_t.gamma_hat.phi[1]) < 1e-5);
  CHECK(std::abs(fit.gamma_hat.phi[1] - fit_t.gamma_hat.phi[0]) < 1e-5);
  CHECK(std::abs(fit.gamma_hat.phi[2] - fit_t.gamma_hat.phi[2]) < 1e-5);
  CHECK(std::abs(fit.gamma_hat.theta[0] - fit_t.gamma_hat.theta[1]) < 1e-5);
  CHECK(std::abs(fit.gamma_hat.theta[1] - fit_t.gamma_hat.theta[0]) < 1e-5);
  CHECK(std::abs(fit.gamma_hat.theta[2] - fit_t.gamma_hat.theta[2]) < 1e-5);
}

TEST_CASE("nonfinite means are rejected, not propagated") {
  const ModelSpec spec{1, 0};
  ParamVector g = ParamVector::zeros(spec);
  g.beta = 800.0;  // exp overflows
  Grid big = Grid::Constant(5, 5, 1e300);
  const double ll = rarma::conditional_loglik(ImageGrid(big), spec, g);
  CHECK(ll == -std::numeric_limits<double>::infinity());
}
