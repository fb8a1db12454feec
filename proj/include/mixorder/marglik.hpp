#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixorder/gibbs.hpp"
#include "mixorder/partitions.hpp"

// Marginal-likelihood estimation for univariate Gaussian mixtures:
// Rao-Blackwellized importance densities built from stored Gibbs moments
// (random-permutation and fully-symmetric variants), importance / reciprocal
// importance / bridge sampling estimators, the candidate's-formula estimator
// with permutation correction, an exact enumeration oracle for small
// problems, and posterior odds over G.

namespace mixorder::marglik {

struct ThetaPoint {
  std::vector<double> mu, s2, eta;
};

enum class SymmetryTag { random_permutation, fully_symmetric };
enum class EstimatorTag { IS, RI, BS, Chib };

inline const char* to_string(SymmetryTag t) {
  return t == SymmetryTag::fully_symmetric ? "F" : "R";
}
inline const char* to_string(EstimatorTag t) {
  switch (t) {
    case EstimatorTag::IS: return "IS";
    case EstimatorTag::RI: return "RI";
    case EstimatorTag::BS: return "BS";
    case EstimatorTag::Chib: return "Chib";
  }
  return "?";
}

struct EvidenceEstimate {
  double log_value = 0.0;
  double se = 0.0;
  EstimatorTag estimator = EstimatorTag::IS;
  SymmetryTag density = SymmetryTag::fully_symmetric;
  int G = 0;
  double ess = 0.0;               // effective sample size of the weight set
  int bs_iterations = 0;          // bridge recursion steps (BS only)
  std::vector<double> bs_trace;   // bridge iterates (BS only)
  std::string warning;
};

// ---------------------------------------------------------------------------
// Importance density.

namespace detail {

// One stored sweep: the conditional-posterior moment block with cached
// log-normalizers, so point evaluation is free of transcendentals.
struct MomentBlock {
  Eigen::VectorXd dir_alpha, mu_mean, mu_var, s2_shape, s2_scale;
  Eigen::VectorXd mu_lognorm, s2_lognorm;
  double log_dir_norm = 0.0;

  static MomentBlock from_output(const gibbs::GibbsOutput& out, int m) {
    const int G = out.G;
    MomentBlock b;
    b.dir_alpha = out.moments.dir_alpha.row(m).transpose();
    b.mu_mean = out.moments.mu_mean.row(m).transpose();
    b.mu_var = out.moments.mu_var.row(m).transpose();
    b.s2_shape = out.moments.s2_shape.row(m).transpose();
    b.s2_scale = out.moments.s2_scale.row(m).transpose();
    b.mu_lognorm.resize(G);
    b.s2_lognorm.resize(G);
    double asum = 0.0, lg = 0.0;
    for (int g = 0; g < G; ++g) {
      b.mu_lognorm(g) = -0.5 * (kLogTwoPi + std::log(b.mu_var(g)));
      b.s2_lognorm(g) = b.s2_shape(g) * std::log(b.s2_scale(g)) - std::lgamma(b.s2_shape(g));
      asum += b.dir_alpha(g);
      lg += std::lgamma(b.dir_alpha(g));
    }
    b.log_dir_norm = std::lgamma(asum) - lg;
    return b;
  }
};

// Point-dependent precomputation shared across blocks.
struct PointCache {
  std::vector<double> log_eta, log_s2, inv_s2;

  explicit PointCache(const ThetaPoint& p) {
    const std::size_t G = p.mu.size();
    log_eta.resize(G);
    log_s2.resize(G);
    inv_s2.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
      log_eta[g] = p.eta[g] > 0.0 ? std::log(p.eta[g]) : kNegInf;
      log_s2[g] = std::log(p.s2[g]);
      inv_s2[g] = 1.0 / p.s2[g];
    }
  }
};

// log of the factor tying block row g to component slot j:
// N(mu_j; ...) IG(s2_j; ...) eta_j^{alpha_g - 1}.
inline double block_factor(const MomentBlock& b, const ThetaPoint& p, const PointCache& c, int g,
                           int j) {
  const double dmu = p.mu[static_cast<std::size_t>(j)] - b.mu_mean(g);
  return b.mu_lognorm(g) - 0.5 * dmu * dmu / b.mu_var(g) + b.s2_lognorm(g) -
         (b.s2_shape(g) + 1.0) * c.log_s2[static_cast<std::size_t>(j)] -
         b.s2_scale(g) * c.inv_s2[static_cast<std::size_t>(j)] +
         (b.dir_alpha(g) - 1.0) * c.log_eta[static_cast<std::size_t>(j)];
}

// log sum over all permutations rho of prod_g exp(L(g, rho(g))): the
// permanent of the factor matrix, computed by Ryser's formula on a row-scaled
// copy. This is the cached-block evaluation of the fully symmetric density:
// L is computed once per (point, block) and reused across all G! terms.
inline double log_permanent(const Eigen::MatrixXd& L) {
  const int n = static_cast<int>(L.rows());
  double shift = 0.0;
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    const double m = L.row(i).maxCoeff();
    if (m == kNegInf) return kNegInf;
    shift += m;
    for (int j = 0; j < n; ++j) A(i, j) = std::exp(L(i, j) - m);
  }
  double total = 0.0;
  const unsigned full = (1u << n) - 1u;
  for (unsigned s = 1; s <= full; ++s) {
    double prod = 1.0;
    for (int i = 0; i < n; ++i) {
      double rowsum = 0.0;
      for (int j = 0; j < n; ++j)
        if (s & (1u << j)) rowsum += A(i, j);
      prod *= rowsum;
    }
    const int parity = n - __builtin_popcount(s);
    total += (parity % 2 == 0) ? prod : -prod;
  }
  if (!(total > 0.0)) return kNegInf;
  return shift + std::log(total);
}

inline double lfactorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace detail

// Mixture of stored conditional-posterior products. For the random-
// permutation variant the stored sweeps themselves carry the permutation
// moves; the fully symmetric variant symmetrizes each stored block over all
// G! component assignments at evaluation time.
struct ImportanceDensity {
  SymmetryTag symmetry = SymmetryTag::random_permutation;
  int G = 0;
  int S = 0;   // number of mixture components (S0 * G! when fully symmetric)
  int S0 = 0;  // stored blocks
  std::vector<detail::MomentBlock> blocks;

  double log_eval(const ThetaPoint& p) const {
    require(static_cast<int>(p.mu.size()) == G, "ImportanceDensity: dimension mismatch");
    const detail::PointCache cache(p);
    std::vector<double> vals(blocks.size());
    if (symmetry == SymmetryTag::random_permutation) {
      for (std::size_t s = 0; s < blocks.size(); ++s) {
        double v = blocks[s].log_dir_norm;
        for (int g = 0; g < G; ++g) v += detail::block_factor(blocks[s], p, cache, g, g);
        vals[s] = v;
      }
      return logsumexp(vals) - std::log(static_cast<double>(S));
    }
    Eigen::MatrixXd L(G, G);
    for (std::size_t s = 0; s < blocks.size(); ++s) {
      for (int g = 0; g < G; ++g)
        for (int j = 0; j < G; ++j) L(g, j) = detail::block_factor(blocks[s], p, cache, g, j);
      vals[s] = blocks[s].log_dir_norm + detail::log_permanent(L);
    }
    return logsumexp(vals) - std::log(static_cast<double>(S0)) - detail::lfactorial(G);
  }

  ThetaPoint sample(RngEngine& rng) const {
    const auto& b = blocks[rng.index(blocks.size())];
    ThetaPoint p;
    p.mu.resize(static_cast<std::size_t>(G));
    p.s2.resize(static_cast<std::size_t>(G));
    std::vector<double> alpha(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) alpha[static_cast<std::size_t>(g)] = b.dir_alpha(g);
    p.eta = rng.dirichlet(alpha);
    for (int g = 0; g < G; ++g) {
      p.mu[static_cast<std::size_t>(g)] = rng.normal(b.mu_mean(g), b.mu_var(g));
      p.s2[static_cast<std::size_t>(g)] = rng.inverse_gamma(b.s2_shape(g), b.s2_scale(g));
    }
    if (symmetry == SymmetryTag::fully_symmetric && G > 1) {
      const auto perm = rng.permutation(G);
      ThetaPoint q = p;
      for (int g = 0; g < G; ++g) {
        const std::size_t t = static_cast<std::size_t>(perm[static_cast<std::size_t>(g)]);
        q.mu[t] = p.mu[static_cast<std::size_t>(g)];
        q.s2[t] = p.s2[static_cast<std::size_t>(g)];
        q.eta[t] = p.eta[static_cast<std::size_t>(g)];
      }
      return q;
    }
    return p;
  }
};

namespace detail {

inline std::vector<int> thinned_indices(int M, int S) {
  std::vector<int> idx(static_cast<std::size_t>(S));
  for (int j = 0; j < S; ++j)
    idx[static_cast<std::size_t>(j)] = static_cast<int>((static_cast<long>(j) * M) / S);
  return idx;
}

}  // namespace detail

// Random-permutation importance density: S stored sweeps, evenly thinned.
// The chain must have been run with permutation moves, otherwise the density
// misses posterior modes and every estimator built on it is biased.
inline ImportanceDensity build_density_random(const gibbs::GibbsOutput& output, int S) {
  require(S >= 1 && S <= output.M, "build_density_random: need 1 <= S <= M");
  if (!output.permute && output.G > 1)
    throw invalid_input(
        "build_density_random: chain was run without permutation moves; the density would not "
        "cover all labelling modes");
  ImportanceDensity q;
  q.symmetry = SymmetryTag::random_permutation;
  q.G = output.G;
  q.S = S;
  q.S0 = S;
  for (int m : detail::thinned_indices(output.M, S))
    q.blocks.push_back(detail::MomentBlock::from_output(output, m));
  return q;
}

// Fully symmetric importance density: S0 stored sweeps symmetrized over all
// G! label permutations at evaluation time (moments are stored for a single
// labelling only).
inline ImportanceDensity build_density_full(const gibbs::GibbsOutput& output, int S0) {
  require(S0 >= 1 && S0 <= output.M, "build_density_full: need 1 <= S0 <= M");
  if (output.G > 6)
    throw invalid_input(
        "build_density_full: refused for G > 6 (G! expansion of the symmetrized density)");
  ImportanceDensity q;
  q.symmetry = SymmetryTag::fully_symmetric;
  q.G = output.G;
  q.S0 = S0;
  q.S = S0 * static_cast<int>(std::lround(std::tgamma(output.G + 1.0)));
  for (int m : detail::thinned_indices(output.M, S0))
    q.blocks.push_back(detail::MomentBlock::from_output(output, m));
  return q;
}

// ---------------------------------------------------------------------------
// Target evaluations.

// log p(y | theta) for a univariate mixture point.
inline double log_likelihood_at(const ThetaPoint& p, const std::vector<double>& y) {
  const int G = static_cast<int>(p.mu.size());
  std::vector<double> lnorm(static_cast<std::size_t>(G)), leta(static_cast<std::size_t>(G)),
      logw(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const std::size_t gs = static_cast<std::size_t>(g);
    lnorm[gs] = -0.5 * (kLogTwoPi + std::log(p.s2[gs]));
    leta[gs] = p.eta[gs] > 0.0 ? std::log(p.eta[gs]) : kNegInf;
  }
  double total = 0.0;
  for (double yi : y) {
    for (int g = 0; g < G; ++g) {
      const std::size_t gs = static_cast<std::size_t>(g);
      const double d = yi - p.mu[gs];
      logw[gs] = leta[gs] + lnorm[gs] - 0.5 * d * d / p.s2[gs];
    }
    total += logsumexp(logw);
  }
  return total;
}

inline ThetaPoint theta_from_params(const MixtureParams& params) {
  ThetaPoint p;
  for (int g = 0; g < params.G(); ++g) {
    p.mu.push_back(params.components[static_cast<std::size_t>(g)].mean(0));
    p.s2.push_back(params.components[static_cast<std::size_t>(g)].cov(0, 0));
    p.eta.push_back(params.weights[static_cast<std::size_t>(g)]);
  }
  return p;
}

namespace detail {

struct TargetCache {
  std::vector<double> log_joint;  // log p(y|theta) + log p(theta) per point
  std::vector<double> log_q;      // importance density per point
};

inline TargetCache evaluate_q_draws(const ImportanceDensity& q, const gibbs::RGPrior& prior,
                                    const std::vector<double>& y, int L, std::uint64_t seed,
                                    std::vector<ThetaPoint>* keep = nullptr) {
  TargetCache c;
  c.log_joint.resize(static_cast<std::size_t>(L));
  c.log_q.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    RngEngine rng = RngEngine::at(seed, 0x15d1u, static_cast<std::uint64_t>(l));
    const ThetaPoint p = q.sample(rng);
    c.log_joint[static_cast<std::size_t>(l)] =
        log_likelihood_at(p, y) + prior.log_theta_prior(p.mu, p.s2, p.eta);
    c.log_q[static_cast<std::size_t>(l)] = q.log_eval(p);
    if (keep) keep->push_back(p);
  }
  return c;
}

inline TargetCache evaluate_mcmc_draws(const ImportanceDensity& q, const gibbs::GibbsOutput& out) {
  TargetCache c;
  c.log_joint.resize(static_cast<std::size_t>(out.M));
  c.log_q.resize(static_cast<std::size_t>(out.M));
  ThetaPoint p;
  p.mu.resize(static_cast<std::size_t>(out.G));
  p.s2.resize(static_cast<std::size_t>(out.G));
  p.eta.resize(static_cast<std::size_t>(out.G));
  for (int m = 0; m < out.M; ++m) {
    for (int g = 0; g < out.G; ++g) {
      p.mu[static_cast<std::size_t>(g)] = out.mu(m, g);
      p.s2[static_cast<std::size_t>(g)] = out.sigma2(m, g);
      p.eta[static_cast<std::size_t>(g)] = out.eta(m, g);
    }
    c.log_joint[static_cast<std::size_t>(m)] = out.loglik(m) + out.logprior(m);
    c.log_q[static_cast<std::size_t>(m)] = q.log_eval(p);
  }
  return c;
}

// Normalized importance ratios r_l = w_l / mean(w): mean 1 by construction.
inline std::vector<double> normalized_ratios(const std::vector<double>& logw) {
  const double lmean = logsumexp(logw) - std::log(static_cast<double>(logw.size()));
  std::vector<double> r(logw.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(logw[i] - lmean);
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimators.

// Importance sampling: log of (1/L) sum p(y|theta) p(theta) / q(theta) over
// draws from q. Standard error by the delta method on the log scale.
inline EvidenceEstimate estimate_is(const ImportanceDensity& q, const gibbs::RGPrior& prior,
                                    const Dataset& data, int L, std::uint64_t seed) {
  require(L >= 1, "estimate_is: L must be >= 1");
  const auto y = data.column(0);
  const auto cache = detail::evaluate_q_draws(q, prior, y, L, seed);
  std::vector<double> logw(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l)
    logw[static_cast<std::size_t>(l)] =
        cache.log_joint[static_cast<std::size_t>(l)] - cache.log_q[static_cast<std::size_t>(l)];
  const double lse = logsumexp(logw);
  if (lse == kNegInf)
    throw numerical_error("estimate_is: all importance weights underflow (density/posterior mismatch)");
  EvidenceEstimate e;
  e.estimator = EstimatorTag::IS;
  e.density = q.symmetry;
  e.G = q.G;
  e.log_value = lse - std::log(static_cast<double>(L));
  const auto r = detail::normalized_ratios(logw);
  e.se = std::sqrt(variance_of(r) / static_cast<double>(L));
  double r2 = 0.0;
  for (double v : r) r2 += v * v;
  e.ess = static_cast<double>(L) / (r2 / static_cast<double>(L));
  return e;
}

// Reciprocal importance sampling: evaluated at the MCMC draws only, no draws
// from q required. Standard error by batch means (the draws are dependent).
inline EvidenceEstimate estimate_ri(const ImportanceDensity& q, const gibbs::RGPrior& prior,
                                    const gibbs::GibbsOutput& output, const Dataset& data) {
  (void)prior;  // the joint target at the draws is already stored in the chain
  require(output.M >= 1, "estimate_ri: empty chain");
  const auto cache = detail::evaluate_mcmc_draws(q, output);
  std::vector<double> logb(static_cast<std::size_t>(output.M));
  for (int m = 0; m < output.M; ++m)
    logb[static_cast<std::size_t>(m)] =
        cache.log_q[static_cast<std::size_t>(m)] - cache.log_joint[static_cast<std::size_t>(m)];
  const double lse = logsumexp(logb);
  if (lse == kNegInf || !std::isfinite(lse))
    throw numerical_error("estimate_ri: reciprocal weights degenerate (density/posterior mismatch)");
  EvidenceEstimate e;
  e.estimator = EstimatorTag::RI;
  e.density = q.symmetry;
  e.G = q.G;
  e.log_value = -(lse - std::log(static_cast<double>(output.M)));
  const auto r = detail::normalized_ratios(logb);
  e.se = se_mean_batch(r);
  double r2 = 0.0;
  for (double v : r) r2 += v * v;
  e.ess = static_cast<double>(output.M) / (r2 / static_cast<double>(output.M));
  return e;
}

// Bridge sampling with the asymptotically optimal bridge: the recursion is
// started at the importance-sampling estimate and iterated to convergence.
inline EvidenceEstimate estimate_bs(const ImportanceDensity& q, const gibbs::RGPrior& prior,
                                    const gibbs::GibbsOutput& output, const Dataset& data, int L,
                                    double tol, std::uint64_t seed, int max_iter = 500) {
  require(L >= 1, "estimate_bs: L must be >= 1");
  const auto y = data.column(0);
  const auto qc = detail::evaluate_q_draws(q, prior, y, L, seed);
  const auto pc = detail::evaluate_mcmc_draws(q, output);
  const int M = output.M;
  const double logL = std::log(static_cast<double>(L));
  const double logM = std::log(static_cast<double>(M));

  // start at the IS value computed from the same q draws
  std::vector<double> logw(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l)
    logw[static_cast<std::size_t>(l)] =
        qc.log_joint[static_cast<std::size_t>(l)] - qc.log_q[static_cast<std::size_t>(l)];
  double t = logsumexp(logw) - logL;
  if (!std::isfinite(t))
    throw numerical_error("estimate_bs: importance starting value degenerate");

  std::vector<double> num(static_cast<std::size_t>(L)), den(static_cast<std::size_t>(M));
  std::vector<double> trace{t};
  int it = 0;
  for (; it < max_iter; ++it) {
    for (int l = 0; l < L; ++l) {
      const std::size_t ls = static_cast<std::size_t>(l);
      num[ls] = qc.log_joint[ls] -
                logsumexp2(logL + qc.log_q[ls], logM + qc.log_joint[ls] - t);
    }
    for (int m = 0; m < M; ++m) {
      const std::size_t ms = static_cast<std::size_t>(m);
      den[ms] = pc.log_q[ms] -
                logsumexp2(logL + pc.log_q[ms], logM + pc.log_joint[ms] - t);
    }
    const double tnew = (logsumexp(num) - logL) - (logsumexp(den) - logM);
    trace.push_back(tnew);
    const double delta = std::abs(tnew - t);
    t = tnew;
    if (delta <= tol * (1.0 + std::abs(t))) break;
  }
  if (it >= max_iter) {
    std::string msg = "estimate_bs: bridge recursion did not converge; trace tail:";
    for (std::size_t k = trace.size() > 5 ? trace.size() - 5 : 0; k < trace.size(); ++k)
      msg += " " + std::to_string(trace[k]);
    throw numerical_error(msg);
  }

  EvidenceEstimate e;
  e.estimator = EstimatorTag::BS;
  e.density = q.symmetry;
  e.G = q.G;
  e.log_value = t;
  e.bs_iterations = it + 1;
  e.bs_trace = trace;
  const auto rn = detail::normalized_ratios(num);
  const auto rd = detail::normalized_ratios(den);
  e.se = std::sqrt(variance_of(rn) / static_cast<double>(L) +
                   se_mean_batch(rd) * se_mean_batch(rd));
  double r2 = 0.0;
  for (double v : rn) r2 += v * v;
  e.ess = static_cast<double>(L) / (r2 / static_cast<double>(L));
  return e;
}

namespace detail {

// log int prod_{i in C} N(y_i; mu, s2) N(mu; m, R2) dmu, as a function of s2.
inline double cluster_loglik_given_s2(int k, double ybar, double ss, double m, double R2,
                                      double s2) {
  if (k == 0) return 0.0;
  return -0.5 * k * (kLogTwoPi + std::log(s2)) - 0.5 * ss / s2 +
         0.5 * (kLogTwoPi + std::log(s2 / k)) + log_normal_pdf(ybar, m, s2 / k + R2);
}

struct ClusterStats {
  int k = 0;
  double ybar = 0.0;
  double ss = 0.0;
  unsigned mask = 0;  // index bitmask when n <= 24, for memoization
};

// log int IG(s2; shape, c0) * cluster_loglik(s2) d s2 by composite Simpson in
// t = log s2 around the integrand mode, accumulated in the log domain.
inline double cluster_marginal_from_stats(const ClusterStats& c, const gibbs::RGPrior& prior,
                                          double c0, int panels = 4000, double halfwidth = 30.0) {
  if (c.k == 0) return 0.0;
  auto logf = [&](double t) {
    const double s2 = std::exp(t);
    return cluster_loglik_given_s2(c.k, c.ybar, c.ss, prior.m, prior.R2, s2) +
           log_inverse_gamma_pdf(s2, prior.ig_shape, c0) + t;  // + t: Jacobian of t = log s2
  };
  const double t_guess = std::log((c0 + 0.5 * c.ss) / (prior.ig_shape + 0.5 * c.k + 1.0));
  double t_mode = t_guess, best = kNegInf;
  for (int i = -80; i <= 80; ++i) {
    const double t = t_guess + 0.5 * i;
    const double v = logf(t);
    if (v > best) {
      best = v;
      t_mode = t;
    }
  }
  const double lo = t_mode - halfwidth;
  const double h = 2.0 * halfwidth / panels;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(panels) + 1);
  for (int i = 0; i <= panels; ++i) {
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    terms.push_back(logf(lo + h * i) + std::log(w));
  }
  return logsumexp(terms) + std::log(h / 3.0);
}

inline std::vector<ClusterStats> sweep_cluster_stats(const gibbs::GibbsOutput& out, int m,
                                                     const std::vector<double>& y) {
  std::vector<ClusterStats> cs(static_cast<std::size_t>(out.G));
  for (int i = 0; i < out.n; ++i) {
    auto& c = cs[static_cast<std::size_t>(out.z_at(m, i) - 1)];
    ++c.k;
    c.ybar += y[static_cast<std::size_t>(i)];
    if (out.n <= 24) c.mask |= (1u << i);
  }
  for (auto& c : cs)
    if (c.k > 0) c.ybar /= c.k;
  for (int i = 0; i < out.n; ++i) {
    auto& c = cs[static_cast<std::size_t>(out.z_at(m, i) - 1)];
    const double d = y[static_cast<std::size_t>(i)] - c.ybar;
    c.ss += d * d;
  }
  return cs;
}

}  // namespace detail

// Candidate's-formula estimator: log p(y|G) = log p(y|t0) + log p(t0) -
// log p(t0|y). The posterior ordinate is the Rao-Blackwellized average of the
// exact conditional p(t0 | y, z^(m), C0^(m)) over the stored sweeps; the
// sigma2 normalizer (a one-dimensional integral) is evaluated by the same
// quadrature the enumeration oracle uses. corrected=true additionally
// averages over all G! label permutations; without it the estimate assumes
// complete label switching within the chain and can be off by up to log G!.
inline EvidenceEstimate estimate_chib(const gibbs::GibbsOutput& output,
                                      const gibbs::RGPrior& prior, const Dataset& data,
                                      std::optional<ThetaPoint> theta_o, bool corrected) {
  require(output.M >= 1, "estimate_chib: empty chain");
  if (corrected && output.G > 6)
    throw invalid_input("estimate_chib: corrected ordinate refused for G > 6");
  const auto y = data.column(0);
  const int G = output.G;
  ThetaPoint t0;
  if (theta_o) {
    t0 = *theta_o;
    require(static_cast<int>(t0.mu.size()) == G, "estimate_chib: theta dimension mismatch");
  } else {
    int best = 0;
    for (int m = 1; m < output.M; ++m)
      if (output.loglik(m) + output.logprior(m) > output.loglik(best) + output.logprior(best))
        best = m;
    t0 = theta_from_params(output.params_at(best));
  }

  std::vector<double> log_eta(static_cast<std::size_t>(G)), log_s2(static_cast<std::size_t>(G));
  for (int j = 0; j < G; ++j) {
    log_eta[static_cast<std::size_t>(j)] =
        t0.eta[static_cast<std::size_t>(j)] > 0.0 ? std::log(t0.eta[static_cast<std::size_t>(j)])
                                                  : kNegInf;
    log_s2[static_cast<std::size_t>(j)] = std::log(t0.s2[static_cast<std::size_t>(j)]);
  }

  // memoized cluster-marginal normalizers when C0 is fixed and n is small
  std::unordered_map<unsigned, double> memo;
  const bool memoizable = prior.c0_fixed.has_value() && output.n <= 24;

  // exact factor linking the sweep's cluster g to component slot j of t0
  auto factor = [&](const detail::ClusterStats& c, double c0, double alpha_g, int j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const double s2j = t0.s2[js];
    double v = log_inverse_gamma_pdf(s2j, prior.ig_shape, c0);
    double lognorm;
    if (memoizable) {
      auto it = memo.find(c.mask);
      if (it == memo.end())
        it = memo.emplace(c.mask, detail::cluster_marginal_from_stats(c, prior, c0, 3000, 28.0))
                 .first;
      lognorm = it->second;
    } else {
      lognorm = detail::cluster_marginal_from_stats(c, prior, c0, 1200, 24.0);
    }
    if (c.k > 0) v += detail::cluster_loglik_given_s2(c.k, c.ybar, c.ss, prior.m, prior.R2, s2j);
    v -= lognorm;
    const double prec = 1.0 / prior.R2 + c.k / s2j;
    v += log_normal_pdf(t0.mu[js], (prior.m / prior.R2 + c.k * c.ybar / s2j) / prec, 1.0 / prec);
    v += (alpha_g - 1.0) * log_eta[js];
    return v;
  };

  std::vector<double> vals(static_cast<std::size_t>(output.M));
  Eigen::MatrixXd L(G, G);
  for (int m = 0; m < output.M; ++m) {
    const auto cs = detail::sweep_cluster_stats(output, m, y);
    const double c0m = output.c0(m);
    const double e0m = output.e0_draws.size() > 0 ? output.e0_draws(m) : prior.e0;
    double asum = 0.0, lgs = 0.0;
    std::vector<double> alpha(static_cast<std::size_t>(G));
    {
      const auto base = prior.e0_vec.empty()
                            ? std::vector<double>(static_cast<std::size_t>(G), e0m)
                            : prior.dirichlet_alpha(G);
      for (int g = 0; g < G; ++g) {
        alpha[static_cast<std::size_t>(g)] = base[static_cast<std::size_t>(g)] +
                                             cs[static_cast<std::size_t>(g)].k;
        asum += alpha[static_cast<std::size_t>(g)];
        lgs += std::lgamma(alpha[static_cast<std::size_t>(g)]);
      }
    }
    const double log_dir_norm = std::lgamma(asum) - lgs;
    if (corrected && G > 1) {
      for (int g = 0; g < G; ++g)
        for (int j = 0; j < G; ++j)
          L(g, j) = factor(cs[static_cast<std::size_t>(g)], c0m, alpha[static_cast<std::size_t>(g)], j);
      vals[static_cast<std::size_t>(m)] =
          log_dir_norm + detail::log_permanent(L) - detail::lfactorial(G);
    } else {
      double v = log_dir_norm;
      for (int g = 0; g < G; ++g)
        v += factor(cs[static_cast<std::size_t>(g)], c0m, alpha[static_cast<std::size_t>(g)], g);
      vals[static_cast<std::size_t>(m)] = v;
    }
  }
  const double log_ordinate = logsumexp(vals) - std::log(static_cast<double>(output.M));
  EvidenceEstimate e;
  e.estimator = EstimatorTag::Chib;
  e.density = corrected ? SymmetryTag::fully_symmetric : SymmetryTag::random_permutation;
  e.G = G;
  e.log_value = log_likelihood_at(t0, y) + prior.log_theta_prior(t0.mu, t0.s2, t0.eta) -
                log_ordinate;
  const auto r = detail::normalized_ratios(vals);
  e.se = se_mean_batch(r);
  if (!corrected && G > 1)
    e.warning =
        "uncorrected posterior ordinate assumes complete label switching; bias up to log G!";
  return e;
}

// ---------------------------------------------------------------------------
// Exact enumeration oracle.

// Exact log evidence by summing p(y|z) p(z|G) over all G^n allocations, with
// per-cluster marginals memoized by index bitmask. Requires a fixed C0 (the
// hyperprior has no closed conditional here) and G^n <= 1e7.
inline double brute_force_evidence(const Dataset& data, int G, const gibbs::RGPrior& prior) {
  require(data.dim() == 1, "brute_force_evidence: univariate data required");
  require(G >= 1, "brute_force_evidence: G must be >= 1");
  prior.validate();
  if (!prior.c0_fixed)
    throw invalid_input("brute_force_evidence: requires a fixed C0 (no hyperprior)");
  const int n = data.n();
  const double lattice = std::pow(static_cast<double>(G), n);
  if (!(lattice <= 1e7))
    throw invalid_input("brute_force_evidence: refused, G^n exceeds 1e7 allocations");
  require(n <= 24, "brute_force_evidence: n too large for bitmask memoization");

  const auto y = data.column(0);
  const double c0 = *prior.c0_fixed;
  std::unordered_map<unsigned, double> memo;
  auto cluster_term = [&](unsigned mask) -> double {
    if (mask == 0) return 0.0;
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second;
    detail::ClusterStats c;
    c.mask = mask;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        ++c.k;
        c.ybar += y[static_cast<std::size_t>(i)];
      }
    c.ybar /= c.k;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        const double d = y[static_cast<std::size_t>(i)] - c.ybar;
        c.ss += d * d;
      }
    const double v = detail::cluster_marginal_from_stats(c, prior, c0);
    memo.emplace(mask, v);
    return v;
  };

  const long total = static_cast<long>(lattice);
  std::vector<int> digits(static_cast<std::size_t>(n), 0);
  std::vector<unsigned> masks(static_cast<std::size_t>(G), 0);
  std::vector<int> counts(static_cast<std::size_t>(G), 0);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(total));
  for (long code = 0; code < total; ++code) {
    std::fill(masks.begin(), masks.end(), 0u);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int g = digits[static_cast<std::size_t>(i)];
      masks[static_cast<std::size_t>(g)] |= (1u << i);
      ++counts[static_cast<std::size_t>(g)];
    }
    double v = sparse::log_partition_prior_finite_counts(counts, prior.e0);
    for (int g = 0; g < G; ++g) v += cluster_term(masks[static_cast<std::size_t>(g)]);
    terms.push_back(v);
    // odometer increment
    for (int i = 0; i < n; ++i) {
      if (++digits[static_cast<std::size_t>(i)] < G) break;
      digits[static_cast<std::size_t>(i)] = 0;
    }
  }
  return logsumexp(terms);
}

// ---------------------------------------------------------------------------
// Posterior odds over G.

enum class GPrior { poisson1, uniform };

inline double log_g_prior(GPrior prior, int G) {
  require(G >= 1, "log_g_prior: G must be >= 1");
  switch (prior) {
    case GPrior::poisson1: return -1.0 - std::lgamma(static_cast<double>(G));  // G-1 ~ Poisson(1)
    case GPrior::uniform: return 0.0;
  }
  return 0.0;
}

// log posterior odds for every ordered pair: log p(y|G) - log p(y|G') +
// log p(G) - log p(G').
inline std::map<std::pair<int, int>, double> posterior_odds(
    const std::map<int, double>& log_evidences, GPrior g_prior) {
  require(log_evidences.size() >= 2, "posterior_odds: need at least two evidences");
  std::map<std::pair<int, int>, double> odds;
  for (const auto& [g1, e1] : log_evidences)
    for (const auto& [g2, e2] : log_evidences)
      if (g1 != g2)
        odds[{g1, g2}] = e1 - e2 + log_g_prior(g_prior, g1) - log_g_prior(g_prior, g2);
  return odds;
}

// ---------------------------------------------------------------------------
// Serialization of estimate tables.

inline nlohmann::json to_json(const EvidenceEstimate& e) {
  nlohmann::json j{{"G", e.G},
                   {"estimator", to_string(e.estimator)},
                   {"density", to_string(e.density)},
                   {"log_value", e.log_value},
                   {"se", e.se},
                   {"ess", e.ess}};
  if (e.estimator == EstimatorTag::BS) j["bs_iterations"] = e.bs_iterations;
  if (!e.warning.empty()) j["warning"] = e.warning;
  return j;
}

inline std::string evidence_table_csv(const std::vector<EvidenceEstimate>& table) {
  std::string out = "G,estimator,density,log_value,se\n";
  char buf[128];
  for (const auto& e : table) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.17g,%.17g\n", e.G, to_string(e.estimator),
                  to_string(e.density), e.log_value, e.se);
    out += buf;
  }
  return out;
}

}  // namespace mixorder::marglik
