#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mixorder/dataset.hpp"
#include "mixorder/mixture.hpp"
#include "mixorder/rng.hpp"
#include "mixorder/stats.hpp"

// Shared mixture math: likelihoods, classification probabilities, entropy,
// simulation and parameter counting. Everything here is a pure function of
// its inputs.

namespace mixorder {

// n x G matrix of log(eta_g f_g(y_i)).
inline Eigen::MatrixXd log_component_weights(const MixtureParams& params, const Dataset& data) {
  require(params.dim() == data.dim(), "dimension mismatch between params and data");
  const int n = data.n(), G = params.G();
  Eigen::MatrixXd lw(n, G);
  for (int g = 0; g < G; ++g) {
    const double lwg = params.weights[static_cast<std::size_t>(g)] > 0.0
                           ? std::log(params.weights[static_cast<std::size_t>(g)])
                           : kNegInf;
    const auto& comp = params.components[static_cast<std::size_t>(g)];
    for (int i = 0; i < n; ++i) lw(i, g) = lwg + comp.log_pdf(data.obs.row(i).transpose());
  }
  return lw;
}

// Observed-data log likelihood: sum_i log sum_g eta_g f_g(y_i | theta_g).
inline double log_obs_likelihood(const MixtureParams& params, const Dataset& data) {
  const Eigen::MatrixXd lw = log_component_weights(params, data);
  double total = 0.0;
  for (long i = 0; i < lw.rows(); ++i) {
    total += logsumexp_row(lw, i);
  }
  if (!std::isfinite(total))
    throw numerical_error("log_obs_likelihood: non-finite value (degenerate parameters)");
  return total;
}

// Complete-data log likelihood: sum_i log(eta_{z_i} f_{z_i}(y_i)).
// Returns -inf when some eta_{z_i} = 0.
inline double log_complete_likelihood(const MixtureParams& params, const AllocationVector& z,
                                      const Dataset& data) {
  require(z.G == params.G(), "log_complete_likelihood: z.G must equal params.G");
  require(z.n() == data.n(), "log_complete_likelihood: z length must equal n");
  const Eigen::MatrixXd lw = log_component_weights(params, data);
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) total += lw(i, z.labels[static_cast<std::size_t>(i)] - 1);
  return total;
}

namespace detail {

// Normalize each row of a matrix of log-weights into probabilities in place.
// Invariant under adding any constant to a whole row.
inline void normalize_rows_from_log(Eigen::MatrixXd& lw) {
  for (long i = 0; i < lw.rows(); ++i) {
    const double lse = logsumexp_row(lw, i);
    if (lse == kNegInf || !std::isfinite(lse))
      throw numerical_error("classification_matrix: all components underflow at observation " +
                            std::to_string(i + 1));
    for (long g = 0; g < lw.cols(); ++g) lw(i, g) = std::exp(lw(i, g) - lse);
  }
}

}  // namespace detail

// tau_ig = eta_g f_g(y_i) / sum_j eta_j f_j(y_i).
inline ClassificationMatrix classification_matrix(const MixtureParams& params,
                                                  const Dataset& data) {
  Eigen::MatrixXd lw = log_component_weights(params, data);
  detail::normalize_rows_from_log(lw);
  return ClassificationMatrix::make(std::move(lw));
}

// ENT = -sum_ig tau_ig log tau_ig, with 0 log 0 := 0. Lies in [0, n log G].
inline double entropy(const ClassificationMatrix& tau) {
  double ent = 0.0;
  for (long i = 0; i < tau.tau.rows(); ++i)
    for (long g = 0; g < tau.tau.cols(); ++g) {
      const double t = tau.tau(i, g);
      if (t > 0.0) ent -= t * std::log(t);
    }
  return std::max(ent, 0.0);
}

// EC = -sum_i log tau_{i,z_i} >= 0; +inf when some tau_{i,z_i} = 0. Its
// expectation over z ~ p(z | y, theta) is entropy(tau).
inline double ec_term(const MixtureParams& params, const AllocationVector& z, const Dataset& data) {
  require(z.G == params.G(), "ec_term: z.G must equal params.G");
  require(z.n() == data.n(), "ec_term: z length must equal n");
  const ClassificationMatrix tau = classification_matrix(params, data);
  double ec = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double t = tau.tau(i, z.labels[static_cast<std::size_t>(i)] - 1);
    if (t <= 0.0) return HUGE_VAL;
    ec -= std::log(t);
  }
  return std::max(ec, 0.0);
}

enum class ModelFamily { gaussian_unconstrained };

inline ModelFamily model_family_from_string(const std::string& s) {
  if (s == "gaussian" || s == "gaussian_unconstrained") return ModelFamily::gaussian_unconstrained;
  throw invalid_input("unknown model family: '" + s + "'");
}

// Free-parameter count of a G-component mixture on r-dimensional data:
// G (1 + r + r(r+1)/2) - 1 for unconstrained Gaussians (3G - 1 when r = 1).
inline int num_free_params(int G, int r, ModelFamily family = ModelFamily::gaussian_unconstrained) {
  require(G >= 1, "num_free_params: G must be >= 1");
  require(r >= 1, "num_free_params: r must be >= 1");
  switch (family) {
    case ModelFamily::gaussian_unconstrained:
      return G * (1 + r + r * (r + 1) / 2) - 1;
  }
  throw invalid_input("num_free_params: unknown model family");
}

// Per-component free parameters excluding the weight (the dim(theta_g) that
// drives the componentwise-EM cancellation rule): 2 when r = 1.
inline int component_param_dim(int r) {
  require(r >= 1, "component_param_dim: r must be >= 1");
  return r + r * (r + 1) / 2;
}

// z_i = argmax_g tau_ig; ties broken by the smallest component index.
inline AllocationVector map_partition(const ClassificationMatrix& tau) {
  std::vector<int> labels(static_cast<std::size_t>(tau.n()));
  for (int i = 0; i < tau.n(); ++i) {
    int best = 0;
    for (int g = 1; g < tau.G(); ++g)
      if (tau.tau(i, g) > tau.tau(i, best)) best = g;
    labels[static_cast<std::size_t>(i)] = best + 1;
  }
  return AllocationVector::make(std::move(labels), tau.G());
}

// Draw z_i ~ MulNom(1, eta) and y_i from component z_i. Deterministic under
// the seed.
inline std::pair<Dataset, AllocationVector> simulate(const MixtureParams& params, int n,
                                                     std::uint64_t seed) {
  require(n >= 1, "simulate: n must be >= 1");
  const int G = params.G(), r = params.dim();
  std::vector<double> logw(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g)
    logw[static_cast<std::size_t>(g)] =
        params.weights[static_cast<std::size_t>(g)] > 0.0
            ? std::log(params.weights[static_cast<std::size_t>(g)])
            : kNegInf;
  Eigen::MatrixXd y(n, r);
  std::vector<int> labels(static_cast<std::size_t>(n));
  RngEngine rng = RngEngine::at(seed, 0x51u);
  for (int i = 0; i < n; ++i) {
    const int g = rng.categorical_log(logw.data(), G);
    labels[static_cast<std::size_t>(i)] = g + 1;
    const auto& comp = params.components[static_cast<std::size_t>(g)];
    Eigen::VectorXd zvec(r);
    for (int j = 0; j < r; ++j) zvec(j) = rng.normal();
    y.row(i) = (comp.mean + comp.chol * zvec).transpose();
  }
  return {Dataset::from_matrix(std::move(y), "simulated"),
          AllocationVector::make(std::move(labels), G)};
}

}  // namespace mixorder
