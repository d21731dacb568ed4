#pragma once

#include <cstddef>
#include <cstdint>

#include "tcal/core/data.hpp"
#include "tcal/core/rng.hpp"
#include "tcal/dgp_spec.hpp"

namespace tcal {

/// One simulated experimental/observational pair.
struct SimulatedPair {
  ExperimentalData exp;
  ObservationalData obs;
  DgpSpec dgp;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

/// Draws n experimental and n_obs observational rows from `dgp`.
///
/// Experimental: X from the rct law, D = mu(X) + sigma_d * eps.
/// Observational: X from the obs law, Z ~ Bernoulli(propensity(X)),
/// Y = m0(X) + Z * Delta(X) + sigma_y * eps.
inline SimulatedPair sample_dgp(const DgpSpec& dgp, std::size_t n, std::size_t n_obs,
                                RngStream& rng) {
  dgp.validate();
  const auto p = static_cast<Eigen::Index>(dgp.dim);
  SimulatedPair out;
  out.dgp = dgp;
  out.master_seed = rng.master_seed();
  out.stream_id = rng.stream_id();

  {
    const auto m = static_cast<Eigen::Index>(n);
    RowMatrix x(m, p);
    Vector d(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto k = static_cast<std::size_t>(j);
        x(i, j) = rng.normal(dgp.rct.mean[k], dgp.rct.sd[k]);
      }
      d(i) = dgp.mu(row_of(x, i)) + dgp.sigma_d * rng.normal();
    }
    out.exp = ExperimentalData(std::move(d), std::move(x));
  }
  {
    const auto m = static_cast<Eigen::Index>(n_obs);
    RowMatrix x(m, p);
    Vector y(m);
    Eigen::VectorXi z(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto k = static_cast<std::size_t>(j);
        x(i, j) = rng.normal(dgp.obs.mean[k], dgp.obs.sd[k]);
      }
      const auto xi = row_of(x, i);
      z(i) = rng.bernoulli(dgp.propensity(xi)) ? 1 : 0;
      y(i) = dgp.m0(xi) + (z(i) == 1 ? dgp.delta(xi) : 0.0) + dgp.sigma_y * rng.normal();
    }
    out.obs = ObservationalData(std::move(y), std::move(z), std::move(x));
  }
  return out;
}

inline SimulatedPair sample_univariate(double theta, std::size_t n, std::size_t n_obs,
                                       RngStream& rng) {
  return sample_dgp(DgpSpec::univariate(theta), n, n_obs, rng);
}

inline SimulatedPair sample_multivariate(double eta, double sigma0_sq, std::size_t n,
                                         std::size_t n_obs, RngStream& rng) {
  return sample_dgp(DgpSpec::multivariate(eta, sigma0_sq), n, n_obs, rng);
}

}  // namespace tcal
