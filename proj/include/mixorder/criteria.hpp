#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mixorder/core.hpp"
#include "mixorder/em.hpp"
#include "mixorder/gibbs.hpp"

// Order-selection criteria. Every criterion is stored in minimize form so
// selection is always an argmin; ties go to the smallest G.

namespace mixorder::criteria {

struct CriterionReport {
  std::string criterion;
  std::map<int, double> values;  // G -> value, minimize form
  int selected_G = 0;
  nlohmann::json aux;

  static CriterionReport make(std::string name, std::map<int, double> values,
                              nlohmann::json aux = nlohmann::json::object()) {
    require(!values.empty(), "CriterionReport: no values");
    int best = values.begin()->first;
    for (const auto& [g, v] : values)
      if (v < values.at(best)) best = g;
    return CriterionReport{std::move(name), std::move(values), best, std::move(aux)};
  }

  nlohmann::json to_json() const {
    nlohmann::json vals = nlohmann::json::object();
    for (const auto& [g, v] : values) vals[std::to_string(g)] = v;
    return nlohmann::json{{"criterion", criterion},
                          {"values", vals},
                          {"selected_G", selected_G},
                          {"aux", aux}};
  }
};

inline double aic(const em::FitResult& fit, int G, int r) {
  require(fit.converged, "aic: fit did not converge");
  return -2.0 * fit.log_lik + 2.0 * num_free_params(G, r);
}

inline double bic(const em::FitResult& fit, int G, int r, int n) {
  require(fit.converged, "bic: fit did not converge");
  return -2.0 * fit.log_lik + num_free_params(G, r) * std::log(static_cast<double>(n));
}

inline double aic3(const em::FitResult& fit, int G, int r) {
  require(fit.converged, "aic3: fit did not converge");
  return -2.0 * fit.log_lik + 3.0 * num_free_params(G, r);
}

// BIC penalized by twice the estimated entropy (minimize form).
inline double icl_bic(const em::FitResult& fit, const Dataset& data) {
  require(fit.converged, "icl_bic: fit did not converge");
  const double ent = entropy(classification_matrix(fit.params, data));
  return bic(fit, fit.params.G(), data.dim(), data.n()) + 2.0 * ent;
}

// The same criterion computed through the complete-data likelihood at the
// MAP-imputed labels: -2 log p(y, z-hat | theta-hat) + upsilon log n. Equals
// icl_bic when the classification is hard; below it otherwise (the per-row
// entropy dominates -log max_g tau_ig). Kept as a cross-check path.
inline double icl_bic_map(const em::FitResult& fit, const Dataset& data) {
  require(fit.converged, "icl_bic_map: fit did not converge");
  const auto zhat = map_partition(classification_matrix(fit.params, data));
  const double lc = log_complete_likelihood(fit.params, zhat, data);
  return -2.0 * lc +
         num_free_params(fit.params.G(), data.dim()) * std::log(static_cast<double>(data.n()));
}

// Identification criterion for the entropy-penalized fit (minimize form):
// -Lcc(theta) + (upsilon/2) log n, with theta from bem_fit.
inline double lcc_icl(const em::FitResult& bem, const Dataset& data, int n) {
  const double lcc = em::lcc_objective(bem.params, data);
  return -lcc +
         0.5 * num_free_params(bem.params.G(), data.dim()) * std::log(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Slope heuristics.

// Penalty value at a calibrated slope: SH(G) = -l_O + 2 kappa upsilon_G.
inline double sh_value(double loglik, int upsilon, double kappa) {
  return -loglik + 2.0 * kappa * upsilon;
}

namespace detail {

// Exact least-absolute-deviations line through two support points: for <= a
// few dozen points the optimal LAD line passes through two of them, so pair
// enumeration is exact.
inline std::pair<double, double> lad_line(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  const std::size_t k = x.size();
  double best_a = 0.0, best_b = 0.0, best_loss = HUGE_VAL;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      if (x[i] == x[j]) continue;
      const double b = (y[j] - y[i]) / (x[j] - x[i]);
      const double a = y[i] - b * x[i];
      double loss = 0.0;
      for (std::size_t t = 0; t < k; ++t) loss += std::abs(y[t] - a - b * x[t]);
      if (loss < best_loss) {
        best_loss = loss;
        best_a = a;
        best_b = b;
      }
    }
  if (best_loss == HUGE_VAL) throw numerical_error("lad_line: degenerate abscissae");
  return {best_a, best_b};
}

}  // namespace detail

// Calibrates the penalty multiplier by robust regression of the maximized
// log likelihood on the model dimension over the `window` most complex
// models (window = 0 picks the top half), then selects by SH(G). aux carries
// the slope and the R^2 of the linearity check.
inline CriterionReport slope_heuristics(const std::map<int, em::FitResult>& fits,
                                        const std::map<int, int>& complexities, int window = 0) {
  require(fits.size() >= 6, "slope_heuristics: need at least 6 fitted models");
  require(fits.size() == complexities.size(), "slope_heuristics: fits/complexities mismatch");
  if (window == 0) window = static_cast<int>((fits.size() + 1) / 2);
  require(window >= 2, "slope_heuristics: window must be >= 2");
  if (static_cast<std::size_t>(window) > fits.size())
    throw invalid_input("slope_heuristics: fewer models than window");

  std::vector<std::pair<int, int>> by_complexity;  // (upsilon, G)
  for (const auto& [g, u] : complexities) by_complexity.push_back({u, g});
  std::sort(by_complexity.begin(), by_complexity.end());
  std::vector<double> xs, ys;
  for (std::size_t i = by_complexity.size() - static_cast<std::size_t>(window);
       i < by_complexity.size(); ++i) {
    xs.push_back(static_cast<double>(by_complexity[i].first));
    ys.push_back(fits.at(by_complexity[i].second).log_lik);
  }
  const auto [a, kappa] = detail::lad_line(xs, ys);
  if (!(kappa > 0.0))
    throw numerical_error(
        "slope_heuristics: non-positive slope estimate (model family bias not stationary)");

  double ss_res = 0.0, ss_tot = 0.0;
  const double ymean = mean_of(ys);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    ss_res += (ys[t] - a - kappa * xs[t]) * (ys[t] - a - kappa * xs[t]);
    ss_tot += (ys[t] - ymean) * (ys[t] - ymean);
  }
  const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;

  std::map<int, double> values;
  for (const auto& [g, fit] : fits) values[g] = sh_value(fit.log_lik, complexities.at(g), kappa);
  return CriterionReport::make(
      "SH", std::move(values),
      nlohmann::json{{"kappa", kappa}, {"intercept", a}, {"r2", r2}, {"window", window}});
}

// ---------------------------------------------------------------------------
// Deviance information criteria from posterior draws. Both integrands are
// label-invariant, so label switching in the chain is harmless.

namespace detail {

// Posterior-mode surrogate: the stored draw maximizing log p(y|theta) +
// log p(theta) over the chain.
inline int mode_draw_index(const gibbs::GibbsOutput& out) {
  if (out.loglik.size() != out.M || out.logprior.size() != out.M)
    throw invalid_input("dic: chain lacks the stored mode surrogate");
  int best = 0;
  for (int m = 1; m < out.M; ++m)
    if (out.loglik(m) + out.logprior(m) > out.loglik(best) + out.logprior(best)) best = m;
  return best;
}

}  // namespace detail

struct DicResult {
  double value = 0.0;
  double mcse = 0.0;  // batch-means Monte Carlo standard error
};

// DIC_2 = -4 E[log p(y|theta) | y] + 2 log p(y|theta_hat), theta_hat the
// stored posterior-mode surrogate. The error estimate combines the
// batch-means term of the posterior expectation with the half-chain spread
// of the plug-in maximum (the mode surrogate is an extreme statistic; its
// seed variability is not captured by batch means alone).
inline DicResult dic2(const gibbs::GibbsOutput& out) {
  require(out.M >= 1000, "dic2: need at least 1000 post-burn-in draws");
  std::vector<double> ll(static_cast<std::size_t>(out.M));
  for (int m = 0; m < out.M; ++m) ll[static_cast<std::size_t>(m)] = out.loglik(m);
  const double e_ll = mean_of(ll);
  const int mode = detail::mode_draw_index(out);
  const double val = -4.0 * e_ll + 2.0 * out.loglik(mode);
  const std::size_t half = ll.size() / 2;
  const double max1 = *std::max_element(ll.begin(), ll.begin() + static_cast<long>(half));
  const double max2 = *std::max_element(ll.begin() + static_cast<long>(half), ll.end());
  const double mode_spread = std::abs(max1 - max2);
  const double se = std::sqrt(16.0 * se_mean_batch(ll) * se_mean_batch(ll) +
                              4.0 * mode_spread * mode_spread);
  return {val, se};
}

// DIC_4a = DIC_2 + 2 E[ENT(theta; G) | y].
inline DicResult dic4a(const gibbs::GibbsOutput& out, const Dataset& data) {
  require(out.M >= 1000, "dic4a: need at least 1000 post-burn-in draws");
  const DicResult base = dic2(out);
  std::vector<double> ents(static_cast<std::size_t>(out.M));
  for (int m = 0; m < out.M; ++m)
    ents[static_cast<std::size_t>(m)] = entropy(classification_matrix(out.params_at(m), data));
  const double e_ent = mean_of(ents);
  const double mcse = std::sqrt(base.mcse * base.mcse + 4.0 * se_mean_batch(ents) * se_mean_batch(ents));
  return {base.value + 2.0 * e_ent, mcse};
}

// ---------------------------------------------------------------------------
// Parametric bootstrap likelihood ratio test.

struct BootstrapLrtResult {
  double lrs_obs = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double quantile = 0.0;          // empirical (1-alpha) quantile of the bootstrap LRS
  int redraws = 0;                // replicates redrawn after an EM failure
  std::vector<double> lrs_boot;
};

namespace detail {

// 2 (l_O(theta1) - l_O(theta0)) with the G1 fit additionally seeded from the
// duplicated G0 fit, so the statistic is non-negative.
inline double lr_statistic(const Dataset& data, int g0, int g1, const em::EmOptions& opts,
                           std::uint64_t seed, em::FitResult* fit0_out = nullptr) {
  em::FitResult fit0 = em::em_fit(data, g0, opts, mix_key(seed, 0xauLL));
  em::FitResult fit1 = em::em_fit(data, g1, opts, mix_key(seed, 0xbuLL));
  MixtureParams grown = fit0.params;
  for (int g = g0; g < g1; ++g) grown = em::split_init(grown);
  try {
    em::FitResult nested = em::em_fit_from(data, grown, opts.tol, opts.max_iter);
    if (nested.log_lik > fit1.log_lik) fit1 = std::move(nested);
  } catch (const em_collapse&) {
  }
  if (fit0_out) *fit0_out = fit0;
  return 2.0 * (fit1.log_lik - fit0.log_lik);
}

}  // namespace detail

// Parametric bootstrap test of G = g0 against G = g1: B samples of size n
// are drawn from the fitted null and the observed likelihood-ratio statistic
// is ranked among the bootstrapped ones (Monte Carlo p-value with the +1
// correction). Replicates whose EM fails are redrawn.
inline BootstrapLrtResult bootstrap_lrt(const Dataset& data, int g0, int g1, int B, double alpha,
                                        std::uint64_t seed, const em::EmOptions& opts = {}) {
  require(g0 < g1, "bootstrap_lrt: need G0 < G1");
  require(B >= 99, "bootstrap_lrt: need B >= 99");
  require(alpha > 0.0 && alpha < 1.0, "bootstrap_lrt: alpha in (0,1)");

  em::FitResult fit0;
  BootstrapLrtResult res;
  res.lrs_obs = detail::lr_statistic(data, g0, g1, opts, mix_key(seed, 0x0b5uLL), &fit0);

  res.lrs_boot.reserve(static_cast<std::size_t>(B));
  std::uint64_t draw_id = 0;
  const int max_redraws = 10 * B;
  while (static_cast<int>(res.lrs_boot.size()) < B) {
    const std::uint64_t k = mix_key(seed, 0xb007uLL, draw_id++);
    if (res.redraws > max_redraws)
      throw numerical_error("bootstrap_lrt: too many failed replicates");
    auto [boot, z] = simulate(fit0.params, data.n(), k);
    try {
      res.lrs_boot.push_back(detail::lr_statistic(boot, g0, g1, opts, k));
    } catch (const numerical_error&) {
      ++res.redraws;
    }
  }

  int count_ge = 0;
  for (double v : res.lrs_boot)
    if (v >= res.lrs_obs) ++count_ge;
  res.p_value = (1.0 + count_ge) / static_cast<double>(B + 1);
  std::vector<double> sorted = res.lrs_boot;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t qidx = static_cast<std::size_t>(
      std::min<double>(std::ceil((1.0 - alpha) * (B + 1)), static_cast<double>(B)) - 1);
  res.quantile = sorted[qidx];
  res.reject = res.p_value <= alpha;
  return res;
}

}  // namespace mixorder::criteria
