#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mixorder/common.hpp"

namespace mixorder {

constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(const double* x, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == kNegInf || !std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& x) { return logsumexp(x.data(), x.size()); }

// Row-wise log-sum-exp for (possibly column-major) Eigen matrices.
template <class Derived>
double logsumexp_row(const Eigen::MatrixBase<Derived>& m, long i) {
  double mx = kNegInf;
  for (long g = 0; g < m.cols(); ++g) mx = std::max(mx, m(i, g));
  if (mx == kNegInf || !std::isfinite(mx)) return mx;
  double s = 0.0;
  for (long g = 0; g < m.cols(); ++g) s += std::exp(m(i, g) - mx);
  return mx + std::log(s);
}

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var)) - 0.5 * d * d / var;
}

// Inverse gamma with shape a, scale b: mean b/(a-1) for a > 1.
inline double log_inverse_gamma_pdf(double x, double shape, double scale) {
  if (x <= 0.0) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

// Gamma with shape a, rate b: mean a/b.
inline double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

inline double log_dirichlet_normalizer(const std::vector<double>& alpha) {
  double sum = 0.0, lg = 0.0;
  for (double a : alpha) {
    sum += a;
    lg += std::lgamma(a);
  }
  return std::lgamma(sum) - lg;
}

inline double log_dirichlet_pdf(const std::vector<double>& x, const std::vector<double>& alpha) {
  double v = log_dirichlet_normalizer(alpha);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0) return alpha[i] < 1.0 ? HUGE_VAL : kNegInf;
    v += (alpha[i] - 1.0) * std::log(x[i]);
  }
  return v;
}

inline double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() > 1 ? x.size() - 1 : 1);
}

// Standard error of the mean of an iid sample.
inline double se_mean_iid(const std::vector<double>& x) {
  return std::sqrt(variance_of(x) / static_cast<double>(x.size()));
}

// Standard error of the mean of a correlated (MCMC) sample via batch means.
// Few long batches, to cover slowly mixing chains.
inline double se_mean_batch(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 16) return se_mean_iid(x);
  const std::size_t nb = std::min<std::size_t>(
      25, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n)))));
  const std::size_t len = n / nb;
  std::vector<double> bm(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += x[i];
    bm[b] = s / static_cast<double>(len);
  }
  return std::sqrt(variance_of(bm) / static_cast<double>(nb));
}

}  // namespace mixorder
