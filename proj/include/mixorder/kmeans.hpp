#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "mixorder/common.hpp"
#include "mixorder/rng.hpp"

namespace mixorder {

struct kmeans_degenerate : numerical_error {
  using numerical_error::numerical_error;
};

struct KmeansResult {
  std::vector<int> labels;  // 0-based cluster ids
  Eigen::MatrixXd centers;  // K x r
};

// Lloyd's algorithm with k-means++ seeding. Throws kmeans_degenerate when a
// cluster empties; callers retry with a fresh seed where that matters.
inline KmeansResult kmeans(const Eigen::MatrixXd& x, int K, RngEngine& rng, int max_iter = 100) {
  const long n = x.rows(), r = x.cols();
  require(K >= 1 && K <= n, "kmeans: need 1 <= K <= n");

  Eigen::MatrixXd centers(K, r);
  centers.row(0) = x.row(static_cast<long>(rng.index(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    long pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total, acc = 0.0;
      for (long i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<long>(rng.index(static_cast<std::size_t>(n)));
    }
    centers.row(k) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (long i = 0; i < n; ++i) {
      int best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = (x.row(i) - centers.row(k)).squaredNorm();
        if (d < bestd) {
          bestd = d;
          best = k;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, r);
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (long i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0)
        throw kmeans_degenerate("kmeans: empty cluster");
      centers.row(k) = sums.row(k) / counts[static_cast<std::size_t>(k)];
    }
    if (!changed) break;
  }
  return {std::move(labels), std::move(centers)};
}

inline double kmeans_sse(const Eigen::MatrixXd& x, const KmeansResult& r) {
  double sse = 0.0;
  for (long i = 0; i < x.rows(); ++i)
    sse += (x.row(i) - r.centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return sse;
}

// Retry wrapper: runs `tries` seedings, returns the lowest-SSE non-degenerate
// clustering.
inline KmeansResult kmeans_retry(const Eigen::MatrixXd& x, int K, std::uint64_t seed,
                                 int tries = 10) {
  double best_sse = std::numeric_limits<double>::infinity();
  KmeansResult best;
  for (int t = 0; t < tries; ++t) {
    RngEngine rng = RngEngine::at(seed, 0x6b6du, static_cast<std::uint64_t>(t));
    try {
      KmeansResult r = kmeans(x, K, rng);
      const double sse = kmeans_sse(x, r);
      if (sse < best_sse) {
        best_sse = sse;
        best = std::move(r);
      }
    } catch (const kmeans_degenerate&) {
    }
  }
  if (!std::isfinite(best_sse)) throw kmeans_degenerate("kmeans: empty cluster in every retry");
  return best;
}

}  // namespace mixorder
