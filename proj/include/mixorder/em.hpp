#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mixorder/core.hpp"
#include "mixorder/kmeans.hpp"

// Frequentist fitting: EM for the MLE, componentwise EM with the
// message-length cancellation rule, and a monotone ascent fitter for the
// entropy-penalized classification objective.

namespace mixorder::em {

struct FitResult {
  MixtureParams params;
  double log_lik = 0.0;  // observed-data log likelihood at the optimum
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;  // per-iteration objective values, non-decreasing
};

enum class InitPolicy { kmeans_labels, random_responsibilities };

struct EmOptions {
  InitPolicy init = InitPolicy::kmeans_labels;
  double tol = 1e-8;
  int max_iter = 2000;
  int restarts = 10;
};

namespace detail {

// Data scale used by the collapse guard: mean per-coordinate variance.
inline double data_scale(const Dataset& data) {
  const Eigen::RowVectorXd mean = data.obs.colwise().mean();
  return (data.obs.rowwise() - mean).squaredNorm() /
         (static_cast<double>(data.n()) * static_cast<double>(data.dim()));
}

inline void check_component_scale(const Eigen::MatrixXd& cov, double scale) {
  for (long j = 0; j < cov.rows(); ++j)
    if (!(cov(j, j) > 1e-10 * scale))
      throw em_collapse("EM: component variance collapsed");
}

// One E-step: fills lw with log(eta_g f_g(y_i)), tau with responsibilities;
// returns the observed-data log likelihood.
inline double e_step(const MixtureParams& p, const Dataset& data, Eigen::MatrixXd& lw,
                     Eigen::MatrixXd& tau) {
  lw = log_component_weights(p, data);
  tau.resize(lw.rows(), lw.cols());
  double loglik = 0.0;
  for (long i = 0; i < lw.rows(); ++i) {
    const double lse = logsumexp_row(lw, i);
    if (!std::isfinite(lse)) throw em_collapse("EM: observation density underflow");
    loglik += lse;
    for (long g = 0; g < lw.cols(); ++g) tau(i, g) = std::exp(lw(i, g) - lse);
  }
  return loglik;
}

// Weighted Gaussian MLE of one component from a responsibility column.
inline GaussianComponent weighted_component(const Dataset& data,
                                            const Eigen::Ref<const Eigen::VectorXd>& w,
                                            double wsum, double scale) {
  const long r = data.dim();
  if (!(wsum > 1e-12)) throw em_collapse("EM: component weight collapsed");
  Eigen::VectorXd mu = (data.obs.transpose() * w) / wsum;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(r, r);
  for (long i = 0; i < data.obs.rows(); ++i) {
    const Eigen::VectorXd d = data.obs.row(i).transpose() - mu;
    cov.noalias() += w(i) * d * d.transpose();
  }
  cov /= wsum;
  check_component_scale(cov, scale);
  try {
    return GaussianComponent::make(std::move(mu), std::move(cov));
  } catch (const invalid_input&) {
    throw em_collapse("EM: covariance not positive definite");
  }
}

inline MixtureParams m_step(const Dataset& data, const Eigen::MatrixXd& tau, double scale) {
  const long n = tau.rows(), G = tau.cols();
  std::vector<double> weights(static_cast<std::size_t>(G));
  std::vector<GaussianComponent> comps;
  comps.reserve(static_cast<std::size_t>(G));
  double acc = 0.0;
  for (long g = 0; g < G; ++g) {
    const Eigen::VectorXd w = tau.col(g);
    const double wsum = w.sum();
    comps.push_back(weighted_component(data, w, wsum, scale));
    weights[static_cast<std::size_t>(g)] = wsum / static_cast<double>(n);
    acc += weights[static_cast<std::size_t>(g)];
  }
  // exact simplex sum
  weights.back() += 1.0 - acc;
  return MixtureParams::make(std::move(weights), std::move(comps));
}

inline MixtureParams init_from_labels(const Dataset& data, const std::vector<int>& labels0,
                                      int G, double scale) {
  const long n = data.n();
  Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(n, G);
  for (long i = 0; i < n; ++i) tau(i, labels0[static_cast<std::size_t>(i)]) = 1.0;
  // singleton or degenerate clusters start from the global covariance
  std::vector<double> weights(static_cast<std::size_t>(G));
  std::vector<GaussianComponent> comps;
  const Eigen::RowVectorXd gmean = data.obs.colwise().mean();
  Eigen::MatrixXd gcov =
      (data.obs.rowwise() - gmean).transpose() * (data.obs.rowwise() - gmean) /
      static_cast<double>(n);
  for (long j = 0; j < gcov.rows(); ++j) gcov(j, j) = std::max(gcov(j, j), 1e-8 * scale + 1e-300);
  double acc = 0.0;
  for (int g = 0; g < G; ++g) {
    const Eigen::VectorXd w = tau.col(g);
    const double wsum = w.sum();
    weights[static_cast<std::size_t>(g)] = std::max(wsum, 1.0) / static_cast<double>(n);
    try {
      comps.push_back(weighted_component(data, w, wsum, scale));
    } catch (const em_collapse&) {
      Eigen::VectorXd mu = wsum > 0.0 ? Eigen::VectorXd((data.obs.transpose() * w) / wsum)
                                      : Eigen::VectorXd(gmean.transpose());
      comps.push_back(GaussianComponent::make(std::move(mu), gcov));
    }
    acc += weights[static_cast<std::size_t>(g)];
  }
  for (auto& w : weights) w /= acc;
  double sum = 0.0;
  for (std::size_t g = 0; g + 1 < weights.size(); ++g) sum += weights[g];
  weights.back() = 1.0 - sum;
  return MixtureParams::make(std::move(weights), std::move(comps));
}

inline MixtureParams initial_params(const Dataset& data, int G, InitPolicy policy,
                                    std::uint64_t key, double scale) {
  if (G == 1) {
    return init_from_labels(data, std::vector<int>(static_cast<std::size_t>(data.n()), 0), 1,
                            scale);
  }
  if (policy == InitPolicy::kmeans_labels) {
    // standardized coordinates so no column dominates the seeding metric
    Eigen::MatrixXd x = data.obs;
    for (long j = 0; j < x.cols(); ++j) {
      const double m = x.col(j).mean();
      const double sd = std::sqrt((x.col(j).array() - m).square().sum() /
                                  static_cast<double>(x.rows()));
      x.col(j) = (x.col(j).array() - m) / (sd > 0.0 ? sd : 1.0);
    }
    const auto km = kmeans_retry(x, G, key);
    return init_from_labels(data, km.labels, G, scale);
  }
  RngEngine rng = RngEngine::at(key, 0x7272u);
  Eigen::MatrixXd tau(data.n(), G);
  for (long i = 0; i < tau.rows(); ++i) {
    auto row = rng.dirichlet(std::vector<double>(static_cast<std::size_t>(G), 1.0));
    for (int g = 0; g < G; ++g) tau(i, g) = row[static_cast<std::size_t>(g)];
  }
  return m_step(data, tau, scale);
}

}  // namespace detail

// Single EM run from explicit starting parameters.
inline FitResult em_fit_from(const Dataset& data, const MixtureParams& start, double tol = 1e-8,
                             int max_iter = 2000) {
  require(start.dim() == data.dim(), "em_fit_from: dimension mismatch");
  const double scale = detail::data_scale(data);
  MixtureParams params = start;
  Eigen::MatrixXd lw, tau;
  std::vector<double> trace;
  double prev = -HUGE_VAL;
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double loglik = detail::e_step(params, data, lw, tau);
    trace.push_back(loglik);
    if (std::abs(loglik - prev) <= tol * (1.0 + std::abs(loglik))) {
      converged = true;
      break;
    }
    prev = loglik;
    params = detail::m_step(data, tau, scale);
  }
  if (trace.empty()) trace.push_back(detail::e_step(params, data, lw, tau));
  return FitResult{std::move(params), trace.back(), converged, it, std::move(trace)};
}

// Best-of-restarts maximum likelihood fit. Restart 0 seeds from k-means
// labels (the default policy); later restarts use random responsibilities.
// A collapsed restart is consumed; only if every restart collapses does the
// fit fail.
inline FitResult em_fit(const Dataset& data, int G, const EmOptions& opts = {},
                        std::uint64_t seed = 1) {
  require(G >= 1, "em_fit: G must be >= 1");
  require(G <= data.n(), "em_fit: G must not exceed n");
  std::optional<FitResult> best;
  int collapsed = 0;
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    const InitPolicy policy =
        (r == 0) ? opts.init : InitPolicy::random_responsibilities;
    try {
      const auto start = detail::initial_params(data, G, policy,
                                                mix_key(seed, 0xe3u, static_cast<std::uint64_t>(r)),
                                                detail::data_scale(data));
      FitResult fit = em_fit_from(data, start, opts.tol, opts.max_iter);
      if (!best || fit.log_lik > best->log_lik) best = std::move(fit);
    } catch (const em_collapse&) {
      ++collapsed;
    } catch (const kmeans_degenerate&) {
      ++collapsed;
    }
  }
  if (!best)
    throw numerical_error("em_fit: all " + std::to_string(collapsed) +
                          " restarts collapsed (G=" + std::to_string(G) + ")");
  return *best;
}

// Duplicate the heaviest component of a (G-1)-fit; the mixture density is
// unchanged, so EM started here can only improve on the smaller fit. Used to
// guarantee nested likelihood improvement across a G range.
inline MixtureParams split_init(const MixtureParams& smaller) {
  std::size_t heavy = 0;
  for (std::size_t g = 1; g < smaller.weights.size(); ++g)
    if (smaller.weights[g] > smaller.weights[heavy]) heavy = g;
  std::vector<double> w = smaller.weights;
  std::vector<GaussianComponent> comps = smaller.components;
  w[heavy] *= 0.5;
  w.push_back(w[heavy]);
  comps.push_back(comps[heavy]);
  return MixtureParams::make(std::move(w), std::move(comps));
}

// Fits for G = g_min..g_max sharing information: each G additionally tries an
// EM run started from the duplicated best (G-1) fit, so log likelihoods are
// non-decreasing in G.
inline std::vector<FitResult> fit_range(const Dataset& data, int g_min, int g_max,
                                        const EmOptions& opts = {}, std::uint64_t seed = 1) {
  require(g_min >= 1 && g_min <= g_max, "fit_range: need 1 <= g_min <= g_max");
  std::vector<FitResult> fits;
  for (int G = g_min; G <= g_max; ++G) {
    FitResult fit = em_fit(data, G, opts, mix_key(seed, static_cast<std::uint64_t>(G)));
    if (!fits.empty()) {
      try {
        FitResult nested =
            em_fit_from(data, split_init(fits.back().params), opts.tol, opts.max_iter);
        if (nested.log_lik > fit.log_lik) fit = std::move(nested);
      } catch (const em_collapse&) {
      }
    }
    fits.push_back(std::move(fit));
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Componentwise EM with message-length annihilation.

struct MmlResult {
  FitResult fit;
  int g_star = 0;
  double mml_value = 0.0;
  std::vector<int> g_history;  // live component count after each sweep
};

// Cancellation rule: a component whose total responsibility falls below half
// its parameter dimension is annihilated.
inline bool mml_should_annihilate(double total_responsibility, int dim_theta) {
  return total_responsibility < 0.5 * static_cast<double>(dim_theta);
}

// Message-length criterion evaluated at the surviving components. Note: the
// penalty follows the blocked form with a G*-scaled summand; it differs from
// the grouping in Figueiredo & Jain (2002), which weights each component by
// log(n eta_g / 12). The cancellation rule and the componentwise sweeps are
// the standard ones. Selection of G* is driven by annihilation alone, not by
// this value.
inline double mml_criterion(double loglik, int g_star, int dim_theta, int n) {
  const double d = static_cast<double>(dim_theta);
  const double gs = static_cast<double>(g_star);
  return -loglik + 0.5 * gs * std::log(static_cast<double>(n) / 12.0) +
         0.5 * d * gs * (std::log(static_cast<double>(n) * d / 12.0) + gs * (d + 1.0));
}

namespace detail {

// Remove component g and renormalize the weights.
inline void erase_component(MixtureParams& params, std::size_t g) {
  params.weights.erase(params.weights.begin() + static_cast<long>(g));
  params.components.erase(params.components.begin() + static_cast<long>(g));
  if (params.weights.empty())
    throw numerical_error("componentwise_em_mml: all components annihilated");
  double s = 0.0;
  for (double w : params.weights) s += w;
  for (double& w : params.weights) w /= s;
}

}  // namespace detail

// One run of componentwise sweeps at the current component count, with the
// in-sweep cancellation rule. Appends the live count after each sweep to
// g_history and returns the converged params.
inline MixtureParams componentwise_sweeps(const Dataset& data, MixtureParams params, int d,
                                          double scale, double tol, int max_sweeps,
                                          std::vector<int>& g_history, bool& converged,
                                          int& sweeps_used) {
  Eigen::MatrixXd lw, tau;
  double prev_mml = HUGE_VAL;
  converged = false;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    for (std::size_t g = 0; g < params.components.size();) {
      detail::e_step(params, data, lw, tau);
      Eigen::VectorXd wsum = tau.colwise().sum();
      if (mml_should_annihilate(wsum(static_cast<long>(g)), d)) {
        detail::erase_component(params, g);
        continue;  // same index now refers to the next component
      }
      // weight update with the annihilation-aware normalizer
      double denom = 0.0;
      for (long h = 0; h < wsum.size(); ++h)
        denom += std::max(0.0, wsum(h) - 0.5 * d);
      if (denom > 0.0) {
        double acc = 0.0;
        for (std::size_t h = 0; h < params.weights.size(); ++h) {
          params.weights[h] = std::max(0.0, wsum(static_cast<long>(h)) - 0.5 * d) / denom;
          acc += params.weights[h];
        }
        for (auto& w : params.weights) w /= acc;
      }
      try {
        params.components[g] =
            detail::weighted_component(data, tau.col(static_cast<long>(g)),
                                       wsum(static_cast<long>(g)), scale);
      } catch (const em_collapse&) {
        detail::erase_component(params, g);
        continue;
      }
      ++g;
    }
    // re-normalize exactly and evaluate the criterion
    {
      double s = 0.0;
      for (double w : params.weights) s += w;
      for (double& w : params.weights) w /= s;
      double acc = 0.0;
      for (std::size_t h = 0; h + 1 < params.weights.size(); ++h) acc += params.weights[h];
      params.weights.back() = 1.0 - acc;
    }
    const double loglik = detail::e_step(params, data, lw, tau);
    const double mml = mml_criterion(loglik, static_cast<int>(params.weights.size()), d, data.n());
    g_history.push_back(static_cast<int>(params.weights.size()));
    if (std::abs(mml - prev_mml) <= tol * (1.0 + std::abs(mml))) {
      converged = true;
      break;
    }
    prev_mml = mml;
  }
  sweeps_used += sweep;
  return params;
}

// Annihilation path from G_max down: componentwise sweeps with the
// cancellation rule until the criterion stabilizes, then the weakest
// surviving component is removed and the sweeps continue. The configuration
// with the smallest criterion value along the path is returned; symmetric
// stationary points (several components sharing one data cluster) are left
// via the forced removal, the in-sweep rule alone cannot escape them.
inline MmlResult componentwise_em_mml(const Dataset& data, int g_max, std::uint64_t seed = 1,
                                      double tol = 1e-8, int max_sweeps = 2000) {
  require(g_max >= 1 && g_max <= data.n(), "componentwise_em_mml: need 1 <= G_max <= n");
  const double scale = detail::data_scale(data);
  const int d = component_param_dim(data.dim());

  MixtureParams params = detail::initial_params(data, g_max, InitPolicy::kmeans_labels,
                                                mix_key(seed, 0x4d4du), scale);
  std::vector<int> g_history;
  std::vector<double> trace;
  int sweeps_used = 0;
  bool converged = false;
  std::optional<MixtureParams> best;
  double best_mml = HUGE_VAL, best_loglik = 0.0;
  Eigen::MatrixXd lw, tau;
  for (;;) {
    params = componentwise_sweeps(data, std::move(params), d, scale, tol, max_sweeps, g_history,
                                  converged, sweeps_used);
    const double loglik = detail::e_step(params, data, lw, tau);
    const double mml = mml_criterion(loglik, params.G(), d, data.n());
    trace.push_back(-mml);  // trace kept in maximize form
    if (mml < best_mml) {
      best_mml = mml;
      best_loglik = loglik;
      best = params;
    }
    if (params.G() == 1) break;
    std::size_t weakest = 0;
    for (std::size_t g = 1; g < params.weights.size(); ++g)
      if (params.weights[g] < params.weights[weakest]) weakest = g;
    detail::erase_component(params, weakest);
    g_history.push_back(params.G());
  }
  const int g_star = best->G();
  FitResult fit{std::move(*best), best_loglik, converged, sweeps_used, std::move(trace)};
  return MmlResult{std::move(fit), g_star, best_mml, std::move(g_history)};
}

// ---------------------------------------------------------------------------
// Entropy-penalized fitting: maximize Lcc(theta) = l_O(theta) - ENT(theta).

// Lcc computed in one pass; equals sum_ig tau_ig log(eta_g f_g(y_i)).
inline double lcc_objective(const MixtureParams& params, const Dataset& data) {
  const Eigen::MatrixXd lw = log_component_weights(params, data);
  double val = 0.0;
  for (long i = 0; i < lw.rows(); ++i) {
    const double lse = logsumexp_row(lw, i);
    if (!std::isfinite(lse)) throw em_collapse("lcc: observation density underflow");
    for (long g = 0; g < lw.cols(); ++g) {
      const double t = std::exp(lw(i, g) - lse);
      if (t > 0.0) val += t * lw(i, g);
    }
  }
  return val;
}

namespace detail {

// Pack mixture parameters into an unconstrained vector: weight logits,
// means, and log-Cholesky covariance factors.
inline Eigen::VectorXd pack_params(const MixtureParams& p) {
  const int G = p.G(), r = p.dim();
  const int per = 1 + r + r * (r + 1) / 2;
  Eigen::VectorXd x(G * per);
  int k = 0;
  for (int g = 0; g < G; ++g) {
    x(k++) = std::log(std::max(p.weights[static_cast<std::size_t>(g)], 1e-300));
    const auto& c = p.components[static_cast<std::size_t>(g)];
    for (int j = 0; j < r; ++j) x(k++) = c.mean(j);
    for (int j = 0; j < r; ++j)
      for (int l = 0; l <= j; ++l) x(k++) = (l == j) ? std::log(c.chol(j, j)) : c.chol(j, l);
  }
  return x;
}

inline MixtureParams unpack_params(const Eigen::VectorXd& x, int G, int r) {
  std::vector<double> w(static_cast<std::size_t>(G));
  std::vector<GaussianComponent> comps;
  int k = 0;
  double m = -HUGE_VAL;
  std::vector<double> logits(static_cast<std::size_t>(G));
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (int g = 0; g < G; ++g) {
    logits[static_cast<std::size_t>(g)] = x(k++);
    m = std::max(m, logits[static_cast<std::size_t>(g)]);
    Eigen::VectorXd mu(r);
    for (int j = 0; j < r; ++j) mu(j) = x(k++);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(r, r);
    for (int j = 0; j < r; ++j)
      for (int l = 0; l <= j; ++l) L(j, l) = (l == j) ? std::exp(x(k++)) : x(k++);
    means.push_back(std::move(mu));
    covs.push_back(L * L.transpose());
  }
  double s = 0.0;
  for (int g = 0; g < G; ++g) {
    w[static_cast<std::size_t>(g)] = std::exp(logits[static_cast<std::size_t>(g)] - m);
    s += w[static_cast<std::size_t>(g)];
  }
  double acc = 0.0;
  for (int g = 0; g < G; ++g) {
    w[static_cast<std::size_t>(g)] /= s;
    if (g + 1 < G) acc += w[static_cast<std::size_t>(g)];
  }
  w[static_cast<std::size_t>(G - 1)] = 1.0 - acc;
  for (int g = 0; g < G; ++g)
    comps.push_back(GaussianComponent::make(means[static_cast<std::size_t>(g)],
                                            covs[static_cast<std::size_t>(g)]));
  return MixtureParams::make(std::move(w), std::move(comps));
}

}  // namespace detail

// Monotone ascent on Lcc, started from the maximum-likelihood fit. The
// penalized objective has no closed-form update, so each step follows the
// numerical gradient with a backtracking line search; the trace of Lcc values
// is non-decreasing by construction.
inline FitResult bem_fit(const Dataset& data, int G, double tol = 1e-8, int max_iter = 400,
                         std::uint64_t seed = 1) {
  require(G >= 1, "bem_fit: G must be >= 1");
  require(G <= data.n(), "bem_fit: G must not exceed n");
  FitResult mle = em_fit(data, G, EmOptions{}, seed);
  if (G == 1) return mle;  // ENT is identically 0

  const int r = data.dim();
  const double scale = detail::data_scale(data);
  Eigen::VectorXd x = detail::pack_params(mle.params);
  auto eval = [&](const Eigen::VectorXd& v) -> double {
    MixtureParams p = detail::unpack_params(v, G, r);
    for (const auto& c : p.components) detail::check_component_scale(c.cov, scale);
    return lcc_objective(p, data);
  };

  double f = eval(x);
  std::vector<double> trace{f};
  bool converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    Eigen::VectorXd grad(x.size());
    for (long j = 0; j < x.size(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(x(j)));
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      double fp, fm;
      try {
        fp = eval(xp);
      } catch (const em_collapse&) {
        fp = -HUGE_VAL;
      }
      try {
        fm = eval(xm);
      } catch (const em_collapse&) {
        fm = -HUGE_VAL;
      }
      grad(j) = (std::isfinite(fp) && std::isfinite(fm)) ? (fp - fm) / (2.0 * h) : 0.0;
    }
    const double gnorm2 = grad.squaredNorm();
    if (!(gnorm2 > 0.0)) {
      converged = true;
      break;
    }
    double step = 1.0 / (1.0 + std::sqrt(gnorm2));
    double fnew = -HUGE_VAL;
    Eigen::VectorXd xnew;
    bool improved = false;
    for (int ls = 0; ls < 50; ++ls) {
      xnew = x + step * grad;
      try {
        fnew = eval(xnew);
      } catch (const em_collapse&) {
        fnew = -HUGE_VAL;
      }
      if (std::isfinite(fnew) && fnew >= f + 1e-4 * step * gnorm2) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      converged = true;
      break;
    }
    const double delta = fnew - f;
    x = std::move(xnew);
    f = fnew;
    trace.push_back(f);
    if (delta <= tol * (1.0 + std::abs(f))) {
      converged = true;
      break;
    }
  }
  MixtureParams params = detail::unpack_params(x, G, r);
  const double loglik = log_obs_likelihood(params, data);
  return FitResult{std::move(params), loglik, converged, it, std::move(trace)};
}

}  // namespace mixorder::em
