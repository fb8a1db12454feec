#pragma once

// Test-only helpers and independent oracles. Everything in here must stay
// independent of the library code paths it is used to check: likelihoods are
// re-derived by naive summation at long double precision, classification
// probabilities by direct Bayes-rule evaluation, and so on.

#include <cmath>
#include <random>
#include <vector>

#include "mixorder/core.hpp"
#include "mixorder/dataset.hpp"
#include "mixorder/mixture.hpp"

namespace oracle {

inline long double normal_pdf_ld(long double x, long double mean, long double var) {
  const long double d = x - mean;
  return expl(-0.5L * d * d / var) / sqrtl(2.0L * 3.14159265358979323846264338327950288L * var);
}

// Naive observed-data log likelihood without log-sum-exp, univariate.
inline double naive_log_obs_likelihood(const mixorder::MixtureParams& p,
                                       const mixorder::Dataset& d) {
  long double total = 0.0L;
  for (int i = 0; i < d.n(); ++i) {
    long double s = 0.0L;
    for (int g = 0; g < p.G(); ++g)
      s += (long double)p.weights[(size_t)g] *
           normal_pdf_ld(d.obs(i, 0), p.components[(size_t)g].mean(0),
                         p.components[(size_t)g].cov(0, 0));
    total += logl(s);
  }
  return (double)total;
}

// Direct Bayes-rule classification probabilities, univariate.
inline std::vector<std::vector<double>> naive_tau(const mixorder::MixtureParams& p,
                                                  const mixorder::Dataset& d) {
  std::vector<std::vector<double>> tau((size_t)d.n(), std::vector<double>((size_t)p.G()));
  for (int i = 0; i < d.n(); ++i) {
    long double den = 0.0L;
    std::vector<long double> num((size_t)p.G());
    for (int g = 0; g < p.G(); ++g) {
      num[(size_t)g] = (long double)p.weights[(size_t)g] *
                       normal_pdf_ld(d.obs(i, 0), p.components[(size_t)g].mean(0),
                                     p.components[(size_t)g].cov(0, 0));
      den += num[(size_t)g];
    }
    for (int g = 0; g < p.G(); ++g) tau[(size_t)i][(size_t)g] = (double)(num[(size_t)g] / den);
  }
  return tau;
}

// A reproducible random univariate mixture for property tests (std::mt19937
// here is fine: tests only need their own determinism).
inline mixorder::MixtureParams random_params(int G, std::mt19937& gen) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::uniform_real_distribution<double> um(-5.0, 5.0);
  std::vector<double> w((size_t)G), m((size_t)G), v((size_t)G);
  double sum = 0.0;
  for (int g = 0; g < G; ++g) {
    w[(size_t)g] = u(gen);
    sum += w[(size_t)g];
  }
  // normalize so the last weight absorbs rounding: exact simplex sum
  double acc = 0.0;
  for (int g = 0; g < G - 1; ++g) {
    w[(size_t)g] /= sum;
    acc += w[(size_t)g];
  }
  w[(size_t)G - 1] = 1.0 - acc;
  for (int g = 0; g < G; ++g) {
    m[(size_t)g] = um(gen);
    v[(size_t)g] = 0.1 + u(gen);
  }
  return mixorder::MixtureParams::make1d(w, m, v);
}

inline mixorder::Dataset random_data(int n, std::mt19937& gen, double lo = -6.0, double hi = 6.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> y((size_t)n);
  for (int i = 0; i < n; ++i) y[(size_t)i] = u(gen);
  return mixorder::Dataset::from_vector(y, "random");
}

inline std::string data_path(const std::string& file) {
  return std::string(MIXORDER_DATA_DIR) + "/" + file;
}

}  // namespace oracle
