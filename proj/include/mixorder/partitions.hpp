#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "mixorder/mixture.hpp"
#include "mixorder/rng.hpp"
#include "mixorder/stats.hpp"

// Random-partition math shared by the sparse-mixture module and the sampler:
// symmetric-Dirichlet allocation priors, predictive allocation probabilities
// (finite, Dirichlet-process and Pitman-Yor variants), and stick-breaking
// weight constructions.

namespace mixorder::sparse {

// log p(z | G) for a symmetric Dir(e0) weight prior, from occupancy counts:
// Gamma(G e0) / (Gamma(n + G e0) Gamma(e0)^{G+}) prod_{g: n_g>0} Gamma(n_g + e0).
inline double log_partition_prior_finite_counts(const std::vector<int>& ng, double e0) {
  require(e0 > 0.0, "partition_prior_finite: e0 must be > 0");
  const double G = static_cast<double>(ng.size());
  int n = 0;
  double v = 0.0;
  for (int c : ng) {
    n += c;
    if (c > 0) v += std::lgamma(c + e0) - std::lgamma(e0);
  }
  v += std::lgamma(G * e0) - std::lgamma(n + G * e0);
  return v;
}

inline double partition_prior_finite(const AllocationVector& z, double e0) {
  return log_partition_prior_finite_counts(z.occupancy(), e0);
}

// log prior of the induced set partition under a DP(alpha):
// alpha^{G+} Gamma(alpha)/Gamma(n+alpha) prod_{g:n_g>0} Gamma(n_g). The input
// allocation is read as a partition; component ids do not matter.
inline double dp_partition_prior(const AllocationVector& z, double alpha) {
  require(alpha > 0.0, "dp_partition_prior: alpha must be > 0");
  const auto ng = z.occupancy();
  double v = 0.0;
  int n = 0, k = 0;
  for (int c : ng) {
    n += c;
    if (c > 0) {
      ++k;
      v += std::lgamma(static_cast<double>(c));
    }
  }
  return k * std::log(alpha) + std::lgamma(alpha) - std::lgamma(n + alpha) + v;
}

struct PredictiveProbs {
  std::map<int, double> existing;  // component/cluster id (1-based) -> probability
  double new_total = 0.0;          // mass on opening any empty component / new cluster
};

// Finite-mixture predictive allocation probabilities given the allocations of
// the other n-1 observations: existing g gets (N_g + e0)/(n - 1 + e0 G), the
// empty components jointly get e0 (G - K)/(n - 1 + e0 G). The returned masses
// sum to 1 exactly; the residual rounding is assigned to the last slot.
inline PredictiveProbs pred_prob_finite(const AllocationVector& z_minus_i, double e0, int G) {
  require(e0 > 0.0, "pred_prob_finite: e0 must be > 0");
  require(G >= z_minus_i.G, "pred_prob_finite: ambient G too small");
  std::vector<int> ng(static_cast<std::size_t>(G), 0);
  for (int zi : z_minus_i.labels) ++ng[static_cast<std::size_t>(zi - 1)];
  const double n1 = static_cast<double>(z_minus_i.n());
  const double denom = n1 + e0 * static_cast<double>(G);
  PredictiveProbs out;
  int k = 0;
  double acc = 0.0;
  for (int g = 0; g < G; ++g) {
    if (ng[static_cast<std::size_t>(g)] > 0) {
      ++k;
      const double p = (ng[static_cast<std::size_t>(g)] + e0) / denom;
      out.existing[g + 1] = p;
      acc += p;
    }
  }
  if (k < G) {
    out.new_total = 1.0 - acc;  // algebraically e0 (G - K)/denom
  } else {
    out.new_total = 0.0;
    if (!out.existing.empty()) {
      auto last = std::prev(out.existing.end());
      last->second += 1.0 - acc;
    }
  }
  return out;
}

// Dirichlet-process predictive: existing cluster g gets N_g/(n-1+alpha), a
// new cluster gets alpha/(n-1+alpha). Special case beta = 0 of the
// Pitman-Yor predictive; exact unit sum as above.
inline PredictiveProbs pred_prob_dp(const AllocationVector& z_minus_i, double alpha) {
  require(alpha > 0.0, "pred_prob_dp: alpha must be > 0");
  const auto ng = z_minus_i.occupancy();
  const double denom = static_cast<double>(z_minus_i.n()) + alpha;
  PredictiveProbs out;
  double acc = 0.0;
  for (std::size_t g = 0; g < ng.size(); ++g) {
    if (ng[g] > 0) {
      const double p = static_cast<double>(ng[g]) / denom;
      out.existing[static_cast<int>(g) + 1] = p;
      acc += p;
    }
  }
  out.new_total = 1.0 - acc;  // algebraically alpha/denom
  return out;
}

// Truncated Pitman-Yor stick-breaking weights: nu_g ~ Be(1 - beta, alpha + g beta).
// The G_trunc weights sum to less than 1; the remainder 1 - sum is the mass
// of the untruncated tail. beta = 0 reduces to the DP sticks Be(1, alpha).
inline std::vector<double> pyp_stick_weights(double beta, double alpha, int g_trunc,
                                             std::uint64_t seed) {
  require(beta >= 0.0 && beta < 1.0, "pyp_stick_weights: beta must be in [0,1)");
  require(alpha > -beta, "pyp_stick_weights: need alpha > -beta");
  require(g_trunc >= 1, "pyp_stick_weights: G_trunc must be >= 1");
  RngEngine rng = RngEngine::at(seed, 0x9f9fu);
  std::vector<double> w(static_cast<std::size_t>(g_trunc));
  double remaining = 1.0;
  for (int g = 1; g <= g_trunc; ++g) {
    const double nu = rng.beta(1.0 - beta, alpha + static_cast<double>(g) * beta);
    w[static_cast<std::size_t>(g - 1)] = remaining * nu;
    remaining *= (1.0 - nu);
  }
  return w;
}

// Finite stick-breaking representation of symmetric Dirichlet D_G(e0)
// weights: nu_g ~ Be(e0, (G-g) e0) for g < G and nu_G = 1, so the weights sum
// to 1 exactly.
inline std::vector<double> finite_stick_weights(double e0, int G, std::uint64_t seed) {
  require(e0 > 0.0, "finite_stick_weights: e0 must be > 0");
  require(G >= 1, "finite_stick_weights: G must be >= 1");
  RngEngine rng = RngEngine::at(seed, 0xf1f1u);
  std::vector<double> w(static_cast<std::size_t>(G));
  double remaining = 1.0;
  for (int g = 1; g < G; ++g) {
    const double nu = rng.beta(e0, static_cast<double>(G - g) * e0);
    w[static_cast<std::size_t>(g - 1)] = remaining * nu;
    remaining *= (1.0 - nu);
  }
  w[static_cast<std::size_t>(G - 1)] = remaining;  // nu_G = 1
  return w;
}

}  // namespace mixorder::sparse
