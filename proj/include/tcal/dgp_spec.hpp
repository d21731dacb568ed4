#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/core/normal.hpp"

namespace tcal {

enum class DgpFamily { univariate_kallus, multivariate, custom };

inline const char* to_string(DgpFamily f) {
  switch (f) {
    case DgpFamily::univariate_kallus: return "univariate";
    case DgpFamily::multivariate: return "multivariate";
    case DgpFamily::custom: return "custom";
  }
  return "custom";
}

/// Independent Gaussian coordinates.
struct GaussianLaw {
  std::vector<double> mean;
  std::vector<double> sd;

  static GaussianLaw iid(int dim, double mean, double variance) {
    return {std::vector<double>(static_cast<std::size_t>(dim), mean),
            std::vector<double>(static_cast<std::size_t>(dim), std::sqrt(variance))};
  }
};

/// A fully specified data-generating process with closed-form nuisances.
///
/// Covariate laws are product Gaussians. `delta` and `mu` may depend only on
/// the coordinates listed in `active_dims`; quadrature integrates over those
/// and the likelihood ratio is the ratio of their marginal densities.
struct DgpSpec {
  using Fn = std::function<double(Covariate)>;

  DgpFamily family = DgpFamily::custom;
  double theta = 0.0;
  double eta = 0.0;
  double sigma0_sq = 1.0;
  int dim = 1;
  std::vector<int> active_dims{0};
  GaussianLaw rct;
  GaussianLaw obs;
  Fn delta;       // observational contrast m1 - m0
  Fn mu;          // experimental CATE
  Fn m0;          // observational control-arm mean
  Fn propensity;  // observational P(Z = 1 | X)
  double sigma_d = 1.0;  // sd of D given X
  double sigma_y = 1.0;  // sd of Y given X, Z

  double m1(Covariate x) const { return m0(x) + delta(x); }

  /// f_rct / f_obs over the active coordinates.
  double likelihood_ratio(Covariate x) const {
    double log_ratio = 0.0;
    for (int j : active_dims) {
      const auto k = static_cast<std::size_t>(j);
      const double zr = (x[k] - rct.mean[k]) / rct.sd[k];
      const double zo = (x[k] - obs.mean[k]) / obs.sd[k];
      log_ratio += -0.5 * zr * zr + 0.5 * zo * zo + std::log(obs.sd[k] / rct.sd[k]);
    }
    return std::exp(log_ratio);
  }

  std::string label() const {
    switch (family) {
      case DgpFamily::univariate_kallus: return "univariate(theta=" + std::to_string(theta) + ")";
      case DgpFamily::multivariate:
        return "multivariate(eta=" + std::to_string(eta) +
               ",sigma0_sq=" + std::to_string(sigma0_sq) + ")";
      case DgpFamily::custom: return "custom";
    }
    return "custom";
  }

  void validate() const {
    if (dim < 1) throw invalid_argument("DgpSpec: dim must be >= 1");
    const auto d = static_cast<std::size_t>(dim);
    if (rct.mean.size() != d || rct.sd.size() != d || obs.mean.size() != d || obs.sd.size() != d) {
      throw invalid_argument("DgpSpec: covariate laws must have dim entries");
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!(rct.sd[j] > 0.0) || !(obs.sd[j] > 0.0)) {
        throw invalid_argument("DgpSpec: covariate variances must be positive");
      }
    }
    for (int j : active_dims) {
      if (j < 0 || j >= dim) throw invalid_argument("DgpSpec: active dimension out of range");
    }
    if (!delta || !mu || !m0 || !propensity) throw invalid_argument("DgpSpec: missing nuisance");
    if (!(sigma_d >= 0.0) || !(sigma_y >= 0.0)) throw invalid_argument("DgpSpec: noise sd < 0");
  }

  /// Univariate covariate-shift family: experimental X ~ N(-theta, 1 - theta),
  /// observational X ~ N(0, 1), Delta(x) = 0.75x^2 + 3x + 1, mu = Delta - x,
  /// fair-coin observational treatment, m0(x) = x.
  static DgpSpec univariate(double theta) {
    if (!(theta >= 0.0 && theta < 1.0)) {
      throw invalid_argument("univariate DGP: theta must lie in [0, 1)");
    }
    DgpSpec s;
    s.family = DgpFamily::univariate_kallus;
    s.theta = theta;
    s.dim = 1;
    s.active_dims = {0};
    s.rct = GaussianLaw::iid(1, -theta, 1.0 - theta);
    s.obs = GaussianLaw::iid(1, 0.0, 1.0);
    s.delta = [](Covariate x) { return 0.75 * x[0] * x[0] + 3.0 * x[0] + 1.0; };
    s.mu = [](Covariate x) { return 0.75 * x[0] * x[0] + 2.0 * x[0] + 1.0; };
    s.m0 = [](Covariate x) { return x[0]; };
    s.propensity = [](Covariate) { return 0.5; };
    return s;
  }

  /// Ten-covariate family with a well-specified (eta = 0) or misspecified
  /// (eta != 0) calibration; observational X_j ~ N(0, sigma0_sq), experimental
  /// X_j ~ N(0.5, 1).
  static DgpSpec multivariate(double eta, double sigma0_sq, int dim = 10) {
    if (!(sigma0_sq > 0.0)) throw invalid_argument("multivariate DGP: sigma0_sq must be > 0");
    if (!std::isfinite(eta)) throw invalid_argument("multivariate DGP: eta must be finite");
    if (dim < 2) throw invalid_argument("multivariate DGP: dim must be >= 2");
    DgpSpec s;
    s.family = DgpFamily::multivariate;
    s.eta = eta;
    s.sigma0_sq = sigma0_sq;
    s.dim = dim;
    s.active_dims = {0, 1};
    s.rct = GaussianLaw::iid(dim, 0.5, 1.0);
    s.obs = GaussianLaw::iid(dim, 0.0, sigma0_sq);
    auto expit = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
    s.delta = [expit](Covariate x) { return expit(0.5 * x[0]) * expit(1.0 - 0.5 * x[1]); };
    s.mu = [expit, eta](Covariate x) {
      const double d = expit(0.5 * x[0]) * expit(1.0 - 0.5 * x[1]);
      return 0.5 + 0.5 * d + eta * (x[0] + 1.0) * (x[1] + 1.0);
    };
    s.m0 = [](Covariate x) {
      double sum = 0.0;
      for (double v : x) sum += v;
      return std::sin(x[0]) + std::cos(x[1]) + std::sin(2.0 * x[0]) * std::cos(2.0 * x[1]) +
             0.5 * sum;
    };
    s.propensity = [](Covariate x) { return normal_cdf((2.0 * x[1] - x[0]) / 5.0); };
    return s;
  }
};

}  // namespace tcal
