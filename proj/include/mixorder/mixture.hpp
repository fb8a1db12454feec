#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "mixorder/common.hpp"
#include "mixorder/stats.hpp"

namespace mixorder {

// One Gaussian component. Univariate components are the r = 1 case; the
// Cholesky factor and log-normalizer are cached at construction so density
// evaluations in hot loops stay cheap.
struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::MatrixXd chol;   // lower-triangular L with L L^T = cov
  double log_norm = 0.0;  // -r/2 log(2 pi) - 1/2 log|cov|

  static GaussianComponent make(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
    GaussianComponent c;
    const long r = mean.size();
    require(cov.rows() == r && cov.cols() == r, "component: covariance shape mismatch");
    require(mean.allFinite() && cov.allFinite(), "component: non-finite parameter");
    c.mean = std::move(mean);
    c.cov = std::move(cov);
    if (r == 1) {
      if (!(c.cov(0, 0) > 0.0)) throw invalid_input("component: variance must be > 0");
      c.chol = c.cov.array().sqrt().matrix();
      c.log_norm = -0.5 * (kLogTwoPi + std::log(c.cov(0, 0)));
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
      if (llt.info() != Eigen::Success)
        throw invalid_input("component: covariance not positive definite");
      c.chol = llt.matrixL();
      double logdet = 0.0;
      for (long i = 0; i < r; ++i) logdet += 2.0 * std::log(c.chol(i, i));
      c.log_norm = -0.5 * (static_cast<double>(r) * kLogTwoPi + logdet);
    }
    return c;
  }

  static GaussianComponent make1d(double mean, double var) {
    Eigen::VectorXd m(1);
    m << mean;
    Eigen::MatrixXd v(1, 1);
    v << var;
    return make(std::move(m), std::move(v));
  }

  int dim() const { return static_cast<int>(mean.size()); }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (mean.size() == 1) {
      const double d = x(0) - mean(0);
      return log_norm - 0.5 * d * d / cov(0, 0);
    }
    Eigen::VectorXd d = x - mean;
    chol.triangularView<Eigen::Lower>().solveInPlace(d);
    return log_norm - 0.5 * d.squaredNorm();
  }
};

// Weights plus Gaussian parameter blocks; the full parameter of a G-component
// mixture. Immutable after construction: every operation takes it by const
// reference and returns new values.
struct MixtureParams {
  std::vector<double> weights;
  std::vector<GaussianComponent> components;

  int G() const { return static_cast<int>(weights.size()); }
  int dim() const { return components.empty() ? 0 : components.front().dim(); }

  static MixtureParams make(std::vector<double> weights, std::vector<GaussianComponent> comps) {
    require(!weights.empty(), "MixtureParams: need at least one component");
    require(weights.size() == comps.size(), "MixtureParams: weights/components size mismatch");
    double sum = 0.0;
    for (double w : weights) {
      require(w >= 0.0 && std::isfinite(w), "MixtureParams: weights must be >= 0");
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-12 * std::max(1.0, std::abs(sum)),
            "MixtureParams: weights must sum to 1");
    const int r = comps.front().dim();
    for (const auto& c : comps) require(c.dim() == r, "MixtureParams: mixed component dimensions");
    return MixtureParams{std::move(weights), std::move(comps)};
  }

  static MixtureParams make1d(std::vector<double> weights, const std::vector<double>& means,
                              const std::vector<double>& vars) {
    std::vector<GaussianComponent> comps;
    comps.reserve(means.size());
    for (std::size_t g = 0; g < means.size(); ++g)
      comps.push_back(GaussianComponent::make1d(means[g], vars[g]));
    return make(std::move(weights), std::move(comps));
  }

  MixtureParams permuted(const std::vector<int>& perm) const {
    std::vector<double> w(weights.size());
    std::vector<GaussianComponent> c(components.size());
    for (std::size_t g = 0; g < perm.size(); ++g) {
      w[g] = weights[static_cast<std::size_t>(perm[g])];
      c[g] = components[static_cast<std::size_t>(perm[g])];
    }
    return MixtureParams{std::move(w), std::move(c)};
  }
};

// Cluster labels z_1..z_n in {1,..,G} (stored 1-based, as reported to users).
struct AllocationVector {
  std::vector<int> labels;
  int G = 0;

  int n() const { return static_cast<int>(labels.size()); }

  static AllocationVector make(std::vector<int> labels, int G) {
    require(G >= 1, "AllocationVector: G must be >= 1");
    require(!labels.empty(), "AllocationVector: empty labels");
    for (int z : labels)
      require(z >= 1 && z <= G, "AllocationVector: label outside {1,..,G}");
    return AllocationVector{std::move(labels), G};
  }

  std::vector<int> occupancy() const {
    std::vector<int> ng(static_cast<std::size_t>(G), 0);
    for (int z : labels) ++ng[static_cast<std::size_t>(z - 1)];
    return ng;
  }

  // Number of non-empty clusters.
  int g_plus() const {
    int k = 0;
    for (int c : occupancy())
      if (c > 0) ++k;
    return k;
  }
};

// n x G fuzzy classification matrix of posterior membership probabilities.
struct ClassificationMatrix {
  Eigen::MatrixXd tau;

  int n() const { return static_cast<int>(tau.rows()); }
  int G() const { return static_cast<int>(tau.cols()); }

  static ClassificationMatrix make(Eigen::MatrixXd t) {
    require(t.rows() >= 1 && t.cols() >= 1, "ClassificationMatrix: empty");
    for (long i = 0; i < t.rows(); ++i) {
      double s = 0.0;
      for (long g = 0; g < t.cols(); ++g) {
        require(t(i, g) >= 0.0 && t(i, g) <= 1.0, "ClassificationMatrix: entry outside [0,1]");
        s += t(i, g);
      }
      require(std::abs(s - 1.0) <= 1e-10, "ClassificationMatrix: row does not sum to 1");
    }
    return ClassificationMatrix{std::move(t)};
  }
};

}  // namespace mixorder
