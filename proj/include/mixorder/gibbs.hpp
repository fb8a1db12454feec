#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mixorder/dataset.hpp"
#include "mixorder/hungarian.hpp"
#include "mixorder/kmeans.hpp"
#include "mixorder/mixture.hpp"
#include "mixorder/partitions.hpp"
#include "mixorder/prior.hpp"
#include "mixorder/rng.hpp"

// Full conditional Gibbs sampling for univariate Gaussian mixtures under the
// Richardson-Green prior, with optional random label-permutation moves and a
// per-sweep store of conditional-posterior moments for importance-density
// construction.

namespace mixorder::gibbs {

// Conditional-posterior moments of one sweep, taken at the end-of-sweep
// state: p(eta | z), p(mu_g | sigma2_g, z, y) and p(sigma2_g | mu_g, C0, z, y)
// are fully determined by these numbers.
struct MomentStore {
  Eigen::MatrixXd dir_alpha;  // M x G
  Eigen::MatrixXd mu_mean, mu_var;
  Eigen::MatrixXd s2_shape, s2_scale;
};

struct ChainOptions {
  int M = 12000;
  int burn_in = 2000;
  bool permute = true;
  bool likelihood_off = false;  // prior-only run for sampler correctness checks
  // e0 ~ Gamma(a, b) hyperprior: enables the collapsed Metropolis update of
  // e0 given z (sparse-mixture chains)
  std::optional<std::pair<double, double>> e0_hyper;
};

struct GibbsOutput {
  int G = 0, M = 0, burn_in = 0, n = 0;
  std::uint64_t seed = 0;
  bool permute = false;
  bool labels_resolved = false;
  RGPrior prior;
  ChainOptions options;

  Eigen::MatrixXd mu, sigma2, eta;    // M x G draws
  std::vector<std::int32_t> z_flat;   // M * n labels, 1-based
  Eigen::VectorXd c0;                 // M
  Eigen::VectorXd e0_draws;           // M (empty unless the hyperprior is on)
  Eigen::VectorXd loglik, logprior;   // per-draw observed-data log lik / log prior
  MomentStore moments;

  int z_at(int m, int i) const { return z_flat[static_cast<std::size_t>(m) * n + i]; }

  std::vector<int> z_row(int m) const {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = z_at(m, i);
    return out;
  }

  MixtureParams params_at(int m) const {
    std::vector<double> w(static_cast<std::size_t>(G)), mm(static_cast<std::size_t>(G)),
        vv(static_cast<std::size_t>(G));
    double acc = 0.0;
    for (int g = 0; g < G; ++g) {
      w[static_cast<std::size_t>(g)] = eta(m, g);
      mm[static_cast<std::size_t>(g)] = mu(m, g);
      vv[static_cast<std::size_t>(g)] = sigma2(m, g);
      acc += w[static_cast<std::size_t>(g)];
    }
    for (auto& x : w) x /= acc;
    double s = 0.0;
    for (std::size_t g = 0; g + 1 < w.size(); ++g) s += w[g];
    w.back() = 1.0 - s;
    return MixtureParams::make1d(std::move(w), mm, vv);
  }
};

namespace detail {

struct SweepState {
  std::vector<double> mu, s2, eta;
  std::vector<int> z;  // 0-based internally
  double c0 = 1.0;
  double e0 = 1.0;
};

struct Suffstats {
  std::vector<int> ng;
  std::vector<double> sum;  // sum of y in cluster
};

inline Suffstats sufficient(const std::vector<int>& z, const std::vector<double>& y, int G) {
  Suffstats s;
  s.ng.assign(static_cast<std::size_t>(G), 0);
  s.sum.assign(static_cast<std::size_t>(G), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    ++s.ng[static_cast<std::size_t>(z[i])];
    s.sum[static_cast<std::size_t>(z[i])] += y[i];
  }
  return s;
}

}  // namespace detail

// Recompute the stored conditional moments from an explicit state; the store
// written during sampling equals this function applied to the end-of-sweep
// state (checked by the test suite).
inline void moments_from_state(const std::vector<double>& y, const RGPrior& prior,
                               const std::vector<int>& z0, const std::vector<double>& mu,
                               const std::vector<double>& s2, double c0, double e0,
                               Eigen::VectorXd& dir_alpha, Eigen::VectorXd& mu_mean,
                               Eigen::VectorXd& mu_var, Eigen::VectorXd& s2_shape,
                               Eigen::VectorXd& s2_scale) {
  const int G = static_cast<int>(mu.size());
  dir_alpha.resize(G);
  mu_mean.resize(G);
  mu_var.resize(G);
  s2_shape.resize(G);
  s2_scale.resize(G);
  const auto ss = detail::sufficient(z0, y, G);
  const auto alpha = prior.e0_vec.empty()
                         ? std::vector<double>(static_cast<std::size_t>(G), e0)
                         : prior.dirichlet_alpha(G);
  for (int g = 0; g < G; ++g) {
    const std::size_t gs = static_cast<std::size_t>(g);
    dir_alpha(g) = alpha[gs] + ss.ng[gs];
    const double prec = 1.0 / prior.R2 + ss.ng[gs] / s2[gs];
    mu_var(g) = 1.0 / prec;
    mu_mean(g) = (prior.m / prior.R2 + ss.sum[gs] / s2[gs]) / prec;
    double sse = 0.0;
    for (std::size_t i = 0; i < z0.size(); ++i)
      if (z0[i] == g) sse += (y[i] - mu[gs]) * (y[i] - mu[gs]);
    s2_shape(g) = prior.ig_shape + 0.5 * ss.ng[gs];
    s2_scale(g) = c0 + 0.5 * sse;
  }
}

// Gibbs sweep order: sigma2 | mu, C0, z  ->  mu | sigma2, z  ->  C0 | sigma2
// ->  (e0 | z under the hyperprior)  ->  eta | z  ->  z | theta. When the
// permute flag is set a uniformly random label permutation is applied at the
// end of every sweep. Empty components fall back to their priors through the
// same conditional formulas (n_g = 0).
inline GibbsOutput run_chain(const Dataset& data, int G, const RGPrior& prior,
                             const ChainOptions& options, std::uint64_t seed) {
  require(data.dim() == 1, "run_chain: univariate data required");
  require(G >= 1, "run_chain: G must be >= 1");
  require(options.M >= 1, "run_chain: M must be >= 1");
  require(options.burn_in >= 0, "run_chain: burn_in must be >= 0");
  prior.validate();
  if (options.e0_hyper) {
    require(options.e0_hyper->first > 0.0 && options.e0_hyper->second > 0.0,
            "run_chain: e0 hyperprior parameters must be > 0");
    require(prior.e0_vec.empty(), "run_chain: e0 hyperprior requires a symmetric prior");
  }

  const std::vector<double> y = data.column(0);
  const int n = data.n();
  const int M = options.M, burn = options.burn_in;

  GibbsOutput out;
  out.G = G;
  out.M = M;
  out.burn_in = burn;
  out.n = n;
  out.seed = seed;
  out.permute = options.permute;
  out.prior = prior;
  out.options = options;
  out.mu.resize(M, G);
  out.sigma2.resize(M, G);
  out.eta.resize(M, G);
  out.z_flat.resize(static_cast<std::size_t>(M) * n);
  out.c0.resize(M);
  out.loglik.resize(M);
  out.logprior.resize(M);
  if (options.e0_hyper) out.e0_draws.resize(M);
  out.moments.dir_alpha.resize(M, G);
  out.moments.mu_mean.resize(M, G);
  out.moments.mu_var.resize(M, G);
  out.moments.s2_shape.resize(M, G);
  out.moments.s2_scale.resize(M, G);

  // --- initial state from a k-means partition
  detail::SweepState st;
  st.mu.assign(static_cast<std::size_t>(G), prior.m);
  st.s2.assign(static_cast<std::size_t>(G), prior.R2 / 16.0);
  st.eta.assign(static_cast<std::size_t>(G), 1.0 / G);
  st.z.assign(static_cast<std::size_t>(n), 0);
  st.c0 = prior.c0_fixed ? *prior.c0_fixed : prior.c0_shape / prior.c0_rate;
  st.e0 = options.e0_hyper ? options.e0_hyper->first / options.e0_hyper->second : prior.e0;
  if (G > 1 && n >= G) {
    Eigen::MatrixXd x(n, 1);
    for (int i = 0; i < n; ++i) x(i, 0) = y[static_cast<std::size_t>(i)];
    const auto km = kmeans_retry(x, G, mix_key(seed, 0x1417u));
    st.z = km.labels;
    const auto ss = detail::sufficient(st.z, y, G);
    const double overall_var = variance_of(y);
    for (int g = 0; g < G; ++g) {
      const std::size_t gs = static_cast<std::size_t>(g);
      if (ss.ng[gs] > 0) st.mu[gs] = ss.sum[gs] / ss.ng[gs];
      double sse = 0.0;
      for (int i = 0; i < n; ++i)
        if (st.z[static_cast<std::size_t>(i)] == g)
          sse += (y[static_cast<std::size_t>(i)] - st.mu[gs]) * (y[static_cast<std::size_t>(i)] - st.mu[gs]);
      st.s2[gs] = ss.ng[gs] > 1 ? std::max(sse / ss.ng[gs], 1e-6 * overall_var) : overall_var;
    }
  }

  double mh_step = 1.0;  // e0 random-walk scale, adapted during burn-in
  int mh_accepts = 0, mh_proposals = 0;

  const int total = burn + M;
  for (int sweep = 0; sweep < total; ++sweep) {
    try {
      const bool lik_on = !options.likelihood_off;
      auto ss = detail::sufficient(st.z, y, G);

      // sigma2_g | mu_g, C0, z, y
      {
        RngEngine rng = RngEngine::at(seed, 1u, static_cast<std::uint64_t>(sweep));
        for (int g = 0; g < G; ++g) {
          const std::size_t gs = static_cast<std::size_t>(g);
          double sse = 0.0;
          if (lik_on)
            for (int i = 0; i < n; ++i)
              if (st.z[static_cast<std::size_t>(i)] == g) {
                const double d = y[static_cast<std::size_t>(i)] - st.mu[gs];
                sse += d * d;
              }
          const double shape = prior.ig_shape + (lik_on ? 0.5 * ss.ng[gs] : 0.0);
          const double scale = st.c0 + 0.5 * sse;
          st.s2[gs] = rng.inverse_gamma(shape, scale);
        }
      }

      // mu_g | sigma2_g, z, y
      {
        RngEngine rng = RngEngine::at(seed, 2u, static_cast<std::uint64_t>(sweep));
        for (int g = 0; g < G; ++g) {
          const std::size_t gs = static_cast<std::size_t>(g);
          const double ngl = lik_on ? static_cast<double>(ss.ng[gs]) : 0.0;
          const double suml = lik_on ? ss.sum[gs] : 0.0;
          const double prec = 1.0 / prior.R2 + ngl / st.s2[gs];
          const double mean = (prior.m / prior.R2 + suml / st.s2[gs]) / prec;
          st.mu[gs] = rng.normal(mean, 1.0 / prec);
        }
      }

      // C0 | sigma2
      if (!prior.c0_fixed) {
        RngEngine rng = RngEngine::at(seed, 3u, static_cast<std::uint64_t>(sweep));
        double t = 0.0;
        for (double v : st.s2) t += 1.0 / v;
        st.c0 = rng.gamma(prior.c0_shape + G * prior.ig_shape, prior.c0_rate + t);
      }

      // e0 | z (collapsed over eta): random-walk Metropolis on log e0, then
      // eta | z, e0 right after, which keeps the joint move valid.
      if (options.e0_hyper) {
        RngEngine rng = RngEngine::at(seed, 6u, static_cast<std::uint64_t>(sweep));
        const auto [a_e, b_e] = *options.e0_hyper;
        auto log_target = [&](double e0) {
          return sparse::log_partition_prior_finite_counts(ss.ng, e0) +
                 log_gamma_pdf(e0, a_e, b_e) + std::log(e0);
        };
        const double prop = st.e0 * std::exp(mh_step * rng.normal());
        ++mh_proposals;
        if (std::log(rng.uniform()) < log_target(prop) - log_target(st.e0)) {
          st.e0 = prop;
          ++mh_accepts;
        }
        if (sweep < burn && mh_proposals % 100 == 0) {
          const double rate = static_cast<double>(mh_accepts) / 100.0;
          mh_step = std::clamp(mh_step * std::exp(rate - 0.3), 1e-3, 10.0);
          mh_accepts = 0;
          mh_proposals = 0;
        }
      }

      // eta | z
      {
        RngEngine rng = RngEngine::at(seed, 4u, static_cast<std::uint64_t>(sweep));
        auto alpha = prior.e0_vec.empty()
                         ? std::vector<double>(static_cast<std::size_t>(G), st.e0)
                         : prior.dirichlet_alpha(G);
        if (lik_on)
          for (int g = 0; g < G; ++g) alpha[static_cast<std::size_t>(g)] += ss.ng[static_cast<std::size_t>(g)];
        st.eta = rng.dirichlet(alpha);
      }

      // z | theta, y (joint multinomial per observation), and the
      // observed-data log likelihood as a by-product
      double loglik = 0.0;
      {
        RngEngine rng = RngEngine::at(seed, 5u, static_cast<std::uint64_t>(sweep));
        std::vector<double> logw(static_cast<std::size_t>(G)), leta(static_cast<std::size_t>(G)),
            lnorm(static_cast<std::size_t>(G));
        for (int g = 0; g < G; ++g) {
          const std::size_t gs = static_cast<std::size_t>(g);
          leta[gs] = st.eta[gs] > 0.0 ? std::log(st.eta[gs]) : kNegInf;
          lnorm[gs] = -0.5 * (kLogTwoPi + std::log(st.s2[gs]));
        }
        for (int i = 0; i < n; ++i) {
          const double yi = y[static_cast<std::size_t>(i)];
          for (int g = 0; g < G; ++g) {
            const std::size_t gs = static_cast<std::size_t>(g);
            const double d = yi - st.mu[gs];
            logw[gs] = leta[gs] + (lik_on ? lnorm[gs] - 0.5 * d * d / st.s2[gs] : 0.0);
          }
          if (lik_on) loglik += logsumexp(logw);
          st.z[static_cast<std::size_t>(i)] = rng.categorical_log(logw.data(), G);
        }
      }

      // random label permutation move
      if (options.permute && G > 1) {
        RngEngine rng = RngEngine::at(seed, 7u, static_cast<std::uint64_t>(sweep));
        const auto perm = rng.permutation(G);
        std::vector<int> inv(static_cast<std::size_t>(G));
        for (int g = 0; g < G; ++g) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(g)])] = g;
        std::vector<double> mu2(static_cast<std::size_t>(G)), s22(static_cast<std::size_t>(G)),
            eta2(static_cast<std::size_t>(G));
        for (int g = 0; g < G; ++g) {
          const std::size_t gs = static_cast<std::size_t>(g);
          mu2[gs] = st.mu[static_cast<std::size_t>(perm[gs])];
          s22[gs] = st.s2[static_cast<std::size_t>(perm[gs])];
          eta2[gs] = st.eta[static_cast<std::size_t>(perm[gs])];
        }
        st.mu = std::move(mu2);
        st.s2 = std::move(s22);
        st.eta = std::move(eta2);
        for (int i = 0; i < n; ++i)
          st.z[static_cast<std::size_t>(i)] = inv[static_cast<std::size_t>(st.z[static_cast<std::size_t>(i)])];
      }

      // store post-burn-in draws with end-of-sweep conditional moments
      if (sweep >= burn) {
        const int m = sweep - burn;
        for (int g = 0; g < G; ++g) {
          const std::size_t gs = static_cast<std::size_t>(g);
          out.mu(m, g) = st.mu[gs];
          out.sigma2(m, g) = st.s2[gs];
          out.eta(m, g) = st.eta[gs];
        }
        for (int i = 0; i < n; ++i)
          out.z_flat[static_cast<std::size_t>(m) * n + i] =
              static_cast<std::int32_t>(st.z[static_cast<std::size_t>(i)] + 1);
        out.c0(m) = st.c0;
        if (options.e0_hyper) out.e0_draws(m) = st.e0;
        out.loglik(m) = loglik;
        RGPrior peval = prior;
        if (options.e0_hyper) peval.e0 = st.e0;
        out.logprior(m) = peval.log_theta_prior(st.mu, st.s2, st.eta);
        Eigen::VectorXd da, mm, mv, sh, sc;
        moments_from_state(y, peval, st.z, st.mu, st.s2, st.c0, st.e0, da, mm, mv, sh, sc);
        out.moments.dir_alpha.row(m) = da.transpose();
        out.moments.mu_mean.row(m) = mm.transpose();
        out.moments.mu_var.row(m) = mv.transpose();
        out.moments.s2_shape.row(m) = sh.transpose();
        out.moments.s2_scale.row(m) = sc.transpose();
      }
    } catch (const std::exception& e) {
      throw numerical_error("run_chain: failure at sweep " + std::to_string(sweep) + ": " +
                            e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label-switching resolution: k-means in the point process representation of
// the (mu_g, sigma_g) draws, then a minimum-cost relabelling of every sweep.

inline GibbsOutput resolve_labels(const GibbsOutput& output) {
  require(output.M >= 1000, "resolve_labels: need at least 1000 draws");
  GibbsOutput out = output;
  if (output.G == 1) {
    out.labels_resolved = true;
    return out;
  }
  const int M = output.M, G = output.G;

  Eigen::MatrixXd points(static_cast<long>(M) * G, 2);
  for (int m = 0; m < M; ++m)
    for (int g = 0; g < G; ++g) {
      points(static_cast<long>(m) * G + g, 0) = output.mu(m, g);
      points(static_cast<long>(m) * G + g, 1) = std::sqrt(output.sigma2(m, g));
    }
  const auto km = kmeans_retry(points, G, mix_key(output.seed, 0x6c61u), 10);

  Eigen::MatrixXd cost(G, G);
  std::vector<int> to_new(static_cast<std::size_t>(G));
  for (int m = 0; m < M; ++m) {
    for (int g = 0; g < G; ++g)
      for (int c = 0; c < G; ++c)
        cost(g, c) = (points.row(static_cast<long>(m) * G + g) - km.centers.row(c)).squaredNorm();
    const auto assign = hungarian_assignment(cost);  // old component -> cluster id
    for (int g = 0; g < G; ++g) to_new[static_cast<std::size_t>(g)] = assign[static_cast<std::size_t>(g)];
    for (int g = 0; g < G; ++g) {
      const int c = to_new[static_cast<std::size_t>(g)];
      out.mu(m, c) = output.mu(m, g);
      out.sigma2(m, c) = output.sigma2(m, g);
      out.eta(m, c) = output.eta(m, g);
      out.moments.dir_alpha(m, c) = output.moments.dir_alpha(m, g);
      out.moments.mu_mean(m, c) = output.moments.mu_mean(m, g);
      out.moments.mu_var(m, c) = output.moments.mu_var(m, g);
      out.moments.s2_shape(m, c) = output.moments.s2_shape(m, g);
      out.moments.s2_scale(m, c) = output.moments.s2_scale(m, g);
    }
    for (int i = 0; i < output.n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(m) * output.n + i;
      out.z_flat[idx] =
          static_cast<std::int32_t>(to_new[static_cast<std::size_t>(output.z_flat[idx] - 1)] + 1);
    }
  }
  out.labels_resolved = true;
  return out;
}

// ---------------------------------------------------------------------------
// Point estimates.

// (mode, mean): the mode is the draw maximizing log p(y|theta) + log p(theta)
// over the chain (label-invariant); the mean averages components of an
// identified chain and therefore requires resolved labels.
inline std::pair<MixtureParams, MixtureParams> point_estimates(const GibbsOutput& output) {
  int best = 0;
  for (int m = 1; m < output.M; ++m)
    if (output.loglik(m) + output.logprior(m) > output.loglik(best) + output.logprior(best))
      best = m;
  MixtureParams mode = output.params_at(best);

  if (!output.labels_resolved && output.G > 1)
    throw invalid_input("point_estimates: posterior mean requires resolved labels");
  std::vector<double> w(static_cast<std::size_t>(output.G)), mm(static_cast<std::size_t>(output.G)),
      vv(static_cast<std::size_t>(output.G));
  double acc = 0.0;
  for (int g = 0; g < output.G; ++g) {
    const std::size_t gs = static_cast<std::size_t>(g);
    w[gs] = output.eta.col(g).mean();
    mm[gs] = output.mu.col(g).mean();
    vv[gs] = output.sigma2.col(g).mean();
    acc += w[gs];
  }
  for (auto& x : w) x /= acc;
  double s = 0.0;
  for (std::size_t g = 0; g + 1 < w.size(); ++g) s += w[g];
  w.back() = 1.0 - s;
  return {std::move(mode), MixtureParams::make1d(std::move(w), mm, vv)};
}

// ---------------------------------------------------------------------------
// Persistence: a directory holding metadata.json plus full-precision CSV
// tables (draws.csv, z.csv, moments.csv). Round-trips losslessly.

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void save_output(const GibbsOutput& out, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    nlohmann::json meta{{"G", out.G},
                        {"M", out.M},
                        {"burn_in", out.burn_in},
                        {"n", out.n},
                        {"seed", out.seed},
                        {"permute", out.permute},
                        {"labels_resolved", out.labels_resolved},
                        {"has_e0_draws", out.e0_draws.size() > 0},
                        {"prior",
                         {{"e0", out.prior.e0},
                          {"e0_vec", out.prior.e0_vec},
                          {"m", out.prior.m},
                          {"R2", out.prior.R2},
                          {"ig_shape", out.prior.ig_shape},
                          {"c0_shape", out.prior.c0_shape},
                          {"c0_rate", out.prior.c0_rate},
                          {"c0_fixed", out.prior.c0_fixed ? nlohmann::json(*out.prior.c0_fixed)
                                                          : nlohmann::json()}}}};
    std::ofstream f(dir + "/metadata.json");
    f << meta.dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/draws.csv");
    for (int m = 0; m < out.M; ++m) {
      f << detail::fmt17(out.c0(m)) << ',' << detail::fmt17(out.loglik(m)) << ','
        << detail::fmt17(out.logprior(m));
      if (out.e0_draws.size() > 0) f << ',' << detail::fmt17(out.e0_draws(m));
      for (int g = 0; g < out.G; ++g) f << ',' << detail::fmt17(out.mu(m, g));
      for (int g = 0; g < out.G; ++g) f << ',' << detail::fmt17(out.sigma2(m, g));
      for (int g = 0; g < out.G; ++g) f << ',' << detail::fmt17(out.eta(m, g));
      f << '\n';
    }
  }
  {
    std::ofstream f(dir + "/z.csv");
    for (int m = 0; m < out.M; ++m) {
      for (int i = 0; i < out.n; ++i) {
        if (i) f << ',';
        f << out.z_at(m, i);
      }
      f << '\n';
    }
  }
  {
    std::ofstream f(dir + "/moments.csv");
    for (int m = 0; m < out.M; ++m) {
      for (int g = 0; g < out.G; ++g) {
        if (g) f << ',';
        f << detail::fmt17(out.moments.dir_alpha(m, g)) << ','
          << detail::fmt17(out.moments.mu_mean(m, g)) << ','
          << detail::fmt17(out.moments.mu_var(m, g)) << ','
          << detail::fmt17(out.moments.s2_shape(m, g)) << ','
          << detail::fmt17(out.moments.s2_scale(m, g));
      }
      f << '\n';
    }
  }
}

inline GibbsOutput load_output(const std::string& dir) {
  GibbsOutput out;
  std::ifstream mf(dir + "/metadata.json");
  if (!mf) throw invalid_input("load_output: cannot open " + dir + "/metadata.json");
  nlohmann::json meta = nlohmann::json::parse(mf);
  out.G = meta.at("G").get<int>();
  out.M = meta.at("M").get<int>();
  out.burn_in = meta.at("burn_in").get<int>();
  out.n = meta.at("n").get<int>();
  out.seed = meta.at("seed").get<std::uint64_t>();
  out.permute = meta.at("permute").get<bool>();
  out.labels_resolved = meta.at("labels_resolved").get<bool>();
  const bool has_e0 = meta.at("has_e0_draws").get<bool>();
  const auto& pj = meta.at("prior");
  out.prior.e0 = pj.at("e0").get<double>();
  out.prior.e0_vec = pj.at("e0_vec").get<std::vector<double>>();
  out.prior.m = pj.at("m").get<double>();
  out.prior.R2 = pj.at("R2").get<double>();
  out.prior.ig_shape = pj.at("ig_shape").get<double>();
  out.prior.c0_shape = pj.at("c0_shape").get<double>();
  out.prior.c0_rate = pj.at("c0_rate").get<double>();
  if (!pj.at("c0_fixed").is_null()) out.prior.c0_fixed = pj.at("c0_fixed").get<double>();

  out.mu.resize(out.M, out.G);
  out.sigma2.resize(out.M, out.G);
  out.eta.resize(out.M, out.G);
  out.c0.resize(out.M);
  out.loglik.resize(out.M);
  out.logprior.resize(out.M);
  if (has_e0) out.e0_draws.resize(out.M);
  out.z_flat.resize(static_cast<std::size_t>(out.M) * out.n);
  out.moments.dir_alpha.resize(out.M, out.G);
  out.moments.mu_mean.resize(out.M, out.G);
  out.moments.mu_var.resize(out.M, out.G);
  out.moments.s2_shape.resize(out.M, out.G);
  out.moments.s2_scale.resize(out.M, out.G);

  auto split_doubles = [](const std::string& line) {
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t next = line.find(',', pos);
      const std::string cell =
          line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      if (!cell.empty()) v.push_back(std::stod(cell));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    return v;
  };

  {
    std::ifstream f(dir + "/draws.csv");
    if (!f) throw invalid_input("load_output: cannot open " + dir + "/draws.csv");
    std::string line;
    for (int m = 0; m < out.M; ++m) {
      if (!std::getline(f, line)) throw invalid_input("load_output: truncated draws.csv");
      const auto v = split_doubles(line);
      std::size_t k = 0;
      out.c0(m) = v.at(k++);
      out.loglik(m) = v.at(k++);
      out.logprior(m) = v.at(k++);
      if (has_e0) out.e0_draws(m) = v.at(k++);
      for (int g = 0; g < out.G; ++g) out.mu(m, g) = v.at(k++);
      for (int g = 0; g < out.G; ++g) out.sigma2(m, g) = v.at(k++);
      for (int g = 0; g < out.G; ++g) out.eta(m, g) = v.at(k++);
    }
  }
  {
    std::ifstream f(dir + "/z.csv");
    if (!f) throw invalid_input("load_output: cannot open " + dir + "/z.csv");
    std::string line;
    for (int m = 0; m < out.M; ++m) {
      if (!std::getline(f, line)) throw invalid_input("load_output: truncated z.csv");
      const auto v = split_doubles(line);
      for (int i = 0; i < out.n; ++i)
        out.z_flat[static_cast<std::size_t>(m) * out.n + i] = static_cast<std::int32_t>(v.at(static_cast<std::size_t>(i)));
    }
  }
  {
    std::ifstream f(dir + "/moments.csv");
    if (!f) throw invalid_input("load_output: cannot open " + dir + "/moments.csv");
    std::string line;
    for (int m = 0; m < out.M; ++m) {
      if (!std::getline(f, line)) throw invalid_input("load_output: truncated moments.csv");
      const auto v = split_doubles(line);
      std::size_t k = 0;
      for (int g = 0; g < out.G; ++g) {
        out.moments.dir_alpha(m, g) = v.at(k++);
        out.moments.mu_mean(m, g) = v.at(k++);
        out.moments.mu_var(m, g) = v.at(k++);
        out.moments.s2_shape(m, g) = v.at(k++);
        out.moments.s2_scale(m, g) = v.at(k++);
      }
    }
  }
  return out;
}

}  // namespace mixorder::gibbs
