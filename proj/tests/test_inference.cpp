#include <doctest.h>

#include <rarma/inference.hpp>
#include <rarma/simulation.hpp>

#include <cmath>

using rarma::Grid;
using rarma::ImageGrid;
using rarma::ModelSpec;
using rarma::ParamVector;

TEST_CASE("log link makes every information weight equal to four") {
  // p = q = 0: I = [4 * interior count], so se(beta) = 1 / (2 sqrt(count))
  const ModelSpec spec{0, 0};
  rarma::RngStream rng(3);
  const ImageGrid y = rarma::simulate_field(spec, ParamVector::zeros(spec), 9, 7, rng);
  const auto fit = rarma::fit_cmle(y, spec);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.fisher(0, 0) - 4.0 * 63.0) < 1e-9);
  const auto ci = rarma::confidence_intervals(fit, 0.05);
  CHECK(std::abs(ci.rows[0].se - 1.0 / (2.0 * std::sqrt(63.0))) < 1e-12);

  // the weight does not depend on mu: scale the data, information unchanged
  const ImageGrid y2(5.0 * y.values());
  const auto fit2 = rarma::fit_cmle(y2, spec);
  CHECK(std::abs(fit2.fisher(0, 0) - fit.fisher(0, 0)) < 1e-9);
}

TEST_CASE("fisher matrix is symmetric positive definite on nondegenerate data") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(19);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 25, 25, rng);
  const Eigen::MatrixXd info = rarma::fisher_info(y, sc.spec, sc.gamma_true);
  CHECK((info - info.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("wald statistic, scalar case") {
  // build a 1-parameter fit with estimate 0.5 and se 0.1
  rarma::FitResult fit;
  fit.spec = ModelSpec{0, 0};
  fit.gamma_hat = ParamVector::zeros(fit.spec);
  fit.gamma_hat.beta = 0.5;
  fit.fisher = Eigen::MatrixXd::Constant(1, 1, 100.0);  // I^{-1} = 0.01 = se^2
  fit.converged = true;

  const auto rep = rarma::wald_test(fit, {0}, Eigen::VectorXd::Zero(1), 0.05);
  CHECK(std::abs(rep.statistic - 25.0) < 1e-10);
  CHECK(rep.df == 1);
  CHECK(std::abs(rep.threshold - 3.8414588206941260) < 1e-7);
  CHECK(rep.reject);
  CHECK(rep.p_value < 1e-5);

  // testing the estimate against itself
  const auto rep0 = rarma::wald_test(fit, {0}, Eigen::VectorXd::Constant(1, 0.5), 0.05);
  CHECK(rep0.statistic == 0.0);
  CHECK(rep0.p_value == 1.0);
  CHECK_FALSE(rep0.reject);
}

TEST_CASE("wald statistic is invariant under subset relabeling") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(29);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 30, 30, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.converged);

  const std::vector<int> s1{1, 3, 5};
  const std::vector<int> s2{5, 1, 3};
  Eigen::VectorXd z1 = Eigen::VectorXd::Zero(3), z2 = Eigen::VectorXd::Zero(3);
  const auto r1 = rarma::wald_test(fit, s1, z1, 0.05);
  const auto r2 = rarma::wald_test(fit, s2, z2, 0.05);
  CHECK(std::abs(r1.statistic - r2.statistic) < 1e-8 * std::max(1.0, r1.statistic));
}

TEST_CASE("overall significance on strongly dependent data") {
  auto sc = rarma::scenario_rarma11();
  rarma::RngStream rng(37);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 40, 40, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.converged);
  const auto subset = rarma::dependence_subset(sc.spec);
  CHECK(subset.size() == 6);
  const auto rep = rarma::wald_test(fit, subset, Eigen::VectorXd::Zero(6), 0.05);
  CHECK(rep.df == 6);
  CHECK(rep.p_value < 0.001);
  CHECK(rep.reject);
}

TEST_CASE("confidence intervals use the right normal quantile") {
  auto sc = rarma::scenario_rarma10();
  rarma::RngStream rng(43);
  const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 40, 40, rng);
  const auto fit = rarma::fit_cmle(y, sc.spec);
  REQUIRE(fit.converged);
  const auto ci = rarma::confidence_intervals(fit, 0.05);
  for (const auto& row : ci.rows) {
    CHECK(row.se > 0.0);
    CHECK(std::abs((row.upper - row.estimate) - 1.9599639845400545 * row.se) < 1e-9);
    CHECK(std::abs((row.estimate - row.lower) - 1.9599639845400545 * row.se) < 1e-9);
  }
  CHECK_THROWS_AS(rarma::confidence_intervals(fit, 0.0), std::invalid_argument);
}

TEST_CASE("information criteria arithmetic") {
  rarma::FitResult fit;
  fit.spec = ModelSpec{1, 1};  // kappa = 7
  fit.loglik = -100.0;
  const auto ic = rarma::information_criteria(fit, 20, 20);
  CHECK(ic.aic == 214.0);
  CHECK(std::abs((ic.sic - ic.aic) - 7.0 * (std::log(400.0) - 2.0)) < 1e-12);
  CHECK(ic.sic > ic.aic);  // NM > e^2
}

TEST_CASE("aic prefers the generating order" * doctest::timeout(300)) {
  auto sc = rarma::scenario_rarma10();
  const std::vector<ModelSpec> candidates{{1, 0}, {0, 1}, {1, 1}};
  int wins = 0;
  const int reps = 50;
  for (int r = 0; r < reps; ++r) {
    rarma::RngStream rng(1234, static_cast<std::uint64_t>(r));
    const ImageGrid y = rarma::simulate_field(sc.spec, sc.gamma_true, 40, 40, rng);
    double best = 1e300;
    std::size_t best_idx = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto fit = rarma::fit_cmle(y, candidates[c]);
      const double aic = rarma::information_criteria(fit, 40, 40).aic;
      if (aic < best) {
        best = aic;
        best_idx = c;
      }
    }
    if (best_idx == 0) ++wins;
  }
  CHECK(wins >= reps * 6 / 10);
}

TEST_CASE("singular partitions raise inference errors") {
  rarma::FitResult fit;
  fit.spec = ModelSpec{0, 0};
  fit.gamma_hat = ParamVector::zeros(fit.spec);
  fit.fisher = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(rarma::confidence_intervals(fit, 0.05), rarma::InferenceError);
  CHECK_THROWS_AS(rarma::wald_test(fit, {0}, Eigen::VectorXd::Zero(1), 0.05),
                  rarma::InferenceError);
  CHECK_THROWS_AS(rarma::wald_test(fit, {}, Eigen::VectorXd::Zero(0), 0.05),
                  std::invalid_argument);
}
