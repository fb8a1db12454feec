#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mixorder/dataset.hpp"
#include "mixorder/stats.hpp"

namespace mixorder::gibbs {

// Prior for univariate Gaussian mixtures: eta ~ Dir(e0,...,e0) (or an
// explicit concentration vector), mu_g ~ N(m, R2) with m/R the midpoint and
// length of the observation interval, sigma2_g ~ IG(ig_shape, C0), and
// C0 ~ Gamma(c0_shape, c0_rate) unless pinned via c0_fixed.
struct RGPrior {
  double e0 = 1.0;
  std::vector<double> e0_vec;  // optional per-component concentrations
  double m = 0.0;
  double R2 = 1.0;
  double ig_shape = 2.0;
  double c0_shape = 0.2;
  double c0_rate = 10.0;
  std::optional<double> c0_fixed;

  static RGPrior from_data(const Dataset& data, double e0 = 1.0) {
    require(data.dim() == 1, "RGPrior::from_data: univariate data required");
    RGPrior p;
    p.e0 = e0;
    const double lo = data.obs.col(0).minCoeff();
    const double hi = data.obs.col(0).maxCoeff();
    const double R = hi - lo;
    require(R > 0.0, "RGPrior::from_data: degenerate observation interval");
    p.m = 0.5 * (lo + hi);
    p.R2 = R * R;
    p.c0_rate = 10.0 / p.R2;
    p.validate();
    return p;
  }

  void validate() const {
    require(e0 > 0.0, "RGPrior: e0 must be > 0");
    for (double e : e0_vec) require(e > 0.0, "RGPrior: concentrations must be > 0");
    require(R2 > 0.0 && ig_shape > 0.0 && c0_shape > 0.0 && c0_rate > 0.0,
            "RGPrior: scale parameters must be > 0");
    if (c0_fixed) require(*c0_fixed > 0.0, "RGPrior: fixed C0 must be > 0");
  }

  std::vector<double> dirichlet_alpha(int G) const {
    if (!e0_vec.empty()) {
      require(static_cast<int>(e0_vec.size()) == G, "RGPrior: e0 vector length != G");
      return e0_vec;
    }
    return std::vector<double>(static_cast<std::size_t>(G), e0);
  }

  // log p(sigma2_1..G): product of IG(ig_shape, C0) densities with C0
  // integrated against its gamma hyperprior (compound closed form), or the
  // plain product when C0 is fixed.
  double log_sigma2_prior(const std::vector<double>& s2) const {
    const int G = static_cast<int>(s2.size());
    if (c0_fixed) {
      double v = 0.0;
      for (double x : s2) v += log_inverse_gamma_pdf(x, ig_shape, *c0_fixed);
      return v;
    }
    double t = 0.0, v = 0.0;
    for (double x : s2) {
      if (x <= 0.0) return kNegInf;
      t += 1.0 / x;
      v += -(ig_shape + 1.0) * std::log(x);
    }
    v += -static_cast<double>(G) * std::lgamma(ig_shape);
    v += c0_shape * std::log(c0_rate) - std::lgamma(c0_shape);
    v += std::lgamma(static_cast<double>(G) * ig_shape + c0_shape);
    v -= (static_cast<double>(G) * ig_shape + c0_shape) * std::log(c0_rate + t);
    return v;
  }

  // log p(theta) for theta = (mu, sigma2, eta); C0 never appears in the
  // likelihood, so the marginal prior is the right factor in evidence work.
  double log_theta_prior(const std::vector<double>& mu, const std::vector<double>& s2,
                         const std::vector<double>& eta) const {
    const int G = static_cast<int>(mu.size());
    double v = log_dirichlet_pdf(eta, dirichlet_alpha(G));
    for (double x : mu) v += log_normal_pdf(x, m, R2);
    v += log_sigma2_prior(s2);
    return v;
  }
};

}  // namespace mixorder::gibbs
