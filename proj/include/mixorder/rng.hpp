#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mixorder/common.hpp"

namespace mixorder {

// Deterministic keyed RNG streams. Every stochastic routine derives a fresh
// engine from (seed, site, index...) so that replays are bit-identical and
// independent work items (chains, restarts, bootstrap replicates) never share
// a stream. All samplers below consume raw 64-bit engine output directly;
// none rely on implementation-defined std::*_distribution behaviour.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a) { return splitmix64(a); }

template <class... Rest>
std::uint64_t mix_key(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return mix_key(splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2))), rest...);
}

class RngEngine {
 public:
  explicit RngEngine(std::uint64_t key) : gen_(splitmix64(key)) {}

  template <class... Keys>
  static RngEngine at(std::uint64_t seed, Keys... keys) {
    return RngEngine(mix_key(seed, static_cast<std::uint64_t>(keys)...));
  }

  // Uniform on (0,1); never returns 0 (safe under log).
  double uniform() {
    const double u = (gen_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t bits() { return gen_(); }

  // Integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Box–Muller (cosine branch only, so draws map 1:1 to uniform pairs).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double var) { return mean + std::sqrt(var) * normal(); }

  // Marsaglia–Tsang for shape >= 1; shape boost below 1.
  double gamma(double shape, double rate = 1.0) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw invalid_input("gamma: shape and rate must be > 0");
    if (shape < 1.0) return std::exp(log_gamma(shape)) / rate;
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  // log of a Gamma(shape, 1) draw; stays finite for tiny shapes where the
  // linear-scale draw would underflow (shape ~ 1e-3 in sparse mixtures).
  double log_gamma(double shape) {
    if (!(shape > 0.0)) throw invalid_input("log_gamma: shape must be > 0");
    if (shape >= 1.0) return std::log(gamma(shape));
    const double boost = std::log(gamma(shape + 1.0));
    return boost + std::log(uniform()) / shape;
  }

  double inverse_gamma(double shape, double scale) { return scale / gamma(shape, 1.0); }

  double beta(double a, double b) {
    const double la = log_gamma(a);
    const double lb = log_gamma(b);
    const double m = std::max(la, lb);
    const double lsum = m + std::log(std::exp(la - m) + std::exp(lb - m));
    return std::exp(la - lsum);
  }

  // Dirichlet draw via normalized log-gammas; exact simplex sum by design.
  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> lg(alpha.size());
    double m = -HUGE_VAL;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      lg[i] = log_gamma(alpha[i]);
      m = std::max(m, lg[i]);
    }
    double sum = 0.0;
    for (double& v : lg) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : lg) v /= sum;
    return lg;
  }

  // Categorical draw from log-weights (Gumbel-max; underflow-proof).
  int categorical_log(const double* logw, int n) {
    int best = -1;
    double best_v = -HUGE_VAL;
    for (int g = 0; g < n; ++g) {
      if (logw[g] == -HUGE_VAL) {
        uniform();  // keep stream alignment independent of weight values
        continue;
      }
      const double v = logw[g] - std::log(-std::log(uniform()));
      if (v > best_v) {
        best_v = v;
        best = g;
      }
    }
    if (best < 0) throw numerical_error("categorical_log: all weights are zero");
    return best;
  }

  // Uniformly random permutation of {0,...,n-1} (Fisher–Yates).
  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[static_cast<int>(index(i + 1))]);
    return p;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mixorder
