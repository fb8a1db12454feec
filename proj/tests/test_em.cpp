#include <catch_amalgamated.hpp>
#include <cmath>

#include "mixorder/em.hpp"
#include "test_helpers.hpp"

using namespace mixorder;
using Catch::Approx;

namespace {
Dataset geyser() { return load_csv(oracle::data_path("faithful.csv"), "geyser"); }
}  // namespace

TEST_CASE("em_fit: G=1 closed form", "[em]") {
  auto d = Dataset::from_vector({0.2, 1.4, -0.7, 2.2, 0.9, -1.3, 0.4}, "seven");
  auto fit = em::em_fit(d, 1, {}, 3);
  const double mean = d.obs.col(0).mean();
  const double var = (d.obs.col(0).array() - mean).square().sum() / d.n();
  REQUIRE(fit.params.components[0].mean(0) == Approx(mean).margin(1e-10));
  REQUIRE(fit.params.components[0].cov(0, 0) == Approx(var).margin(1e-10));
  REQUIRE(fit.params.weights[0] == 1.0);
  REQUIRE(fit.converged);
}

TEST_CASE("em_fit: recovers separated two-component simulation", "[em]") {
  auto truth = MixtureParams::make1d({0.4, 0.6}, {-4.0, 4.0}, {1.0, 1.0});
  auto [d, z] = simulate(truth, 500, 21);
  auto fit = em::em_fit(d, 2, {}, 9);
  // identify components by mean order
  int lo = fit.params.components[0].mean(0) < fit.params.components[1].mean(0) ? 0 : 1;
  const double se_lo = std::sqrt(1.0 / (0.4 * 500));
  const double se_hi = std::sqrt(1.0 / (0.6 * 500));
  REQUIRE(std::abs(fit.params.components[(size_t)lo].mean(0) - (-4.0)) <= 3 * se_lo);
  REQUIRE(std::abs(fit.params.components[(size_t)(1 - lo)].mean(0) - 4.0) <= 3 * se_hi);
}

TEST_CASE("em_fit: monotone trace", "[em]") {
  std::mt19937 gen(5);
  auto truth = oracle::random_params(3, gen);
  auto [d, z] = simulate(truth, 200, 33);
  auto fit = em::em_fit(d, 3, {}, 17);
  for (std::size_t t = 1; t < fit.trace.size(); ++t)
    REQUIRE(fit.trace[t] >= fit.trace[t - 1] - 1e-9);
  REQUIRE(fit.log_lik == Approx(fit.trace.back()));
}

TEST_CASE("em_fit: permuting a fit leaves the likelihood unchanged", "[em]") {
  auto truth = MixtureParams::make1d({0.5, 0.5}, {-2.0, 2.0}, {1.0, 2.0});
  auto [d, z] = simulate(truth, 300, 4);
  auto fit = em::em_fit(d, 2, {}, 5);
  REQUIRE(log_obs_likelihood(fit.params.permuted({1, 0}), d) ==
          Approx(fit.log_lik).margin(1e-10));
}

TEST_CASE("em_fit: geyser nested improvement G=2 vs G=3", "[em]") {
  auto d = geyser();
  auto fits = em::fit_range(d, 2, 3, {}, 11);
  REQUIRE(fits[1].log_lik > fits[0].log_lik);
}

TEST_CASE("em_fit: G > n rejected", "[em]") {
  auto d = Dataset::from_vector({1.0, 2.0}, "two");
  REQUIRE_THROWS_AS(em::em_fit(d, 3, {}, 1), invalid_input);
}

TEST_CASE("componentwise MML: cancellation threshold", "[em]") {
  REQUIRE(em::mml_should_annihilate(0.9, 2));
  REQUIRE_FALSE(em::mml_should_annihilate(1.1, 2));
  REQUIRE(em::mml_should_annihilate(2.4, 5));
}

TEST_CASE("componentwise MML: one-component data, G_max=5", "[em]") {
  auto truth = MixtureParams::make1d({1.0}, {0.0}, {1.0});
  int count_one = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto [d, z] = simulate(truth, 300, s);
    auto res = em::componentwise_em_mml(d, 5, s);
    REQUIRE(res.g_star >= 1);
    REQUIRE(res.g_star <= 2);
    if (res.g_star == 1) ++count_one;
    for (std::size_t t = 1; t < res.g_history.size(); ++t)
      REQUIRE(res.g_history[t] <= res.g_history[t - 1]);
  }
  REQUIRE(count_one >= 6);
}

TEST_CASE("componentwise MML: separated three-component data, G_max=10", "[em]") {
  auto truth = MixtureParams::make1d({0.3, 0.4, 0.3}, {-8.0, 0.0, 8.0}, {1.0, 1.0, 1.0});
  auto [d, z] = simulate(truth, 1000, 77);
  auto res = em::componentwise_em_mml(d, 10, 2);
  REQUIRE(res.g_star == 3);
  REQUIRE(res.fit.params.G() == 3);
}

TEST_CASE("bem_fit: G=1 identical to em_fit", "[em]") {
  auto d = Dataset::from_vector({0.0, 0.5, 1.5, -0.5, 2.0}, "five");
  auto bem = em::bem_fit(d, 1, 1e-8, 200, 2);
  auto mle = em::em_fit(d, 1, {}, 2);
  REQUIRE(bem.params.components[0].mean(0) == Approx(mle.params.components[0].mean(0)));
  REQUIRE(bem.params.components[0].cov(0, 0) == Approx(mle.params.components[0].cov(0, 0)));
}

TEST_CASE("bem_fit: penalized objective below the MLE likelihood, monotone trace", "[em]") {
  auto truth = MixtureParams::make1d({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
  auto [d, z] = simulate(truth, 250, 13);
  auto bem = em::bem_fit(d, 2, 1e-8, 200, 13);
  auto mle = em::em_fit(d, 2, {}, 13);
  REQUIRE(em::lcc_objective(bem.params, d) <= mle.log_lik + 1e-9);
  for (std::size_t t = 1; t < bem.trace.size(); ++t)
    REQUIRE(bem.trace[t] >= bem.trace[t - 1] - 1e-12);
  // ascent started at the MLE can only raise the penalized objective
  REQUIRE(em::lcc_objective(bem.params, d) >= em::lcc_objective(mle.params, d) - 1e-9);
}

TEST_CASE("bem_fit: entropy at the penalized optimum drops on overlapping data", "[em]") {
  auto truth = MixtureParams::make1d({0.5, 0.5}, {-1.2, 1.2}, {1.0, 1.0});
  auto [d, z] = simulate(truth, 400, 29);
  auto bem = em::bem_fit(d, 2, 1e-8, 300, 7);
  auto mle = em::em_fit(d, 2, {}, 7);
  const double ent_bem = entropy(classification_matrix(bem.params, d));
  const double ent_mle = entropy(classification_matrix(mle.params, d));
  REQUIRE(ent_bem <= ent_mle + 1e-6);
}
