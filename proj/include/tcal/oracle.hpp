#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcal/core/basis.hpp"
#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/core/rng.hpp"
#include "tcal/dgp_spec.hpp"
#include "tcal/linalg.hpp"
#include "tcal/quadrature.hpp"

namespace tcal {

struct QuadratureSpec {
  /// Gauss–Hermite nodes per active dimension.
  int order = 64;
};

/// Population quantities for a known DGP.
struct OracleEstimands {
  double tau = 0.0;
  double tau_bar = 0.0;
  Vector beta_bar;
  Vector alpha_bar;
  double sigma = 0.0;
};

namespace detail {

/// Quadrature over the active coordinates of one covariate law; inactive
/// coordinates are held at their means (the integrands do not depend on them).
class ActiveQuadrature {
 public:
  ActiveQuadrature(const DgpSpec& dgp, const GaussianLaw& law, int order)
      : active_(dgp.active_dims), base_(law.mean) {
    std::vector<double> m, s;
    for (int j : active_) {
      m.push_back(law.mean[static_cast<std::size_t>(j)]);
      s.push_back(law.sd[static_cast<std::size_t>(j)]);
    }
    quad_ = GaussianQuadrature(m, s, order);
  }

  /// E[f(X)] where f receives a full covariate vector.
  template <class F>
  double expect(F&& f) const {
    std::vector<double> x = base_;
    double acc = 0.0;
    for (std::size_t k = 0; k < quad_.size(); ++k) {
      const auto pt = quad_.point(k);
      for (std::size_t a = 0; a < active_.size(); ++a) x[static_cast<std::size_t>(active_[a])] = pt[a];
      acc += quad_.weight(k) * f(Covariate(x));
    }
    return acc;
  }

  /// E[f(X)] for vector-valued f (f writes into its second argument).
  template <class F>
  Matrix expect_matrix(Eigen::Index rows, Eigen::Index cols, F&& f) const {
    std::vector<double> x = base_;
    Matrix acc = Matrix::Zero(rows, cols);
    Matrix tmp(rows, cols);
    for (std::size_t k = 0; k < quad_.size(); ++k) {
      const auto pt = quad_.point(k);
      for (std::size_t a = 0; a < active_.size(); ++a) x[static_cast<std::size_t>(active_[a])] = pt[a];
      f(Covariate(x), tmp);
      acc += quad_.weight(k) * tmp;
    }
    return acc;
  }

 private:
  std::vector<int> active_;
  std::vector<double> base_;
  GaussianQuadrature quad_{std::vector<double>{0.0}, std::vector<double>{1.0}, 1};
};

}  // namespace detail

/// beta_bar = E_rct[psi psi^T]^-1 E_rct[mu psi], tau_bar = E_obs[psi]^T beta_bar,
/// tau = E_obs[mu], alpha_bar = E_rct[psi psi^T]^-1 E_obs[psi],
/// Sigma = alpha_bar^T E_rct[(sigma_D^2 + (mu - mu_bar)^2) psi psi^T] alpha_bar.
inline OracleEstimands oracle_estimands(const DgpSpec& dgp, const BasisExpansion& psi,
                                        const QuadratureSpec& q = {}) {
  dgp.validate();
  if (q.order < 1) throw invalid_argument("quadrature order must be >= 1");
  const int p = psi.p();
  const detail::ActiveQuadrature rct(dgp, dgp.rct, q.order);
  const detail::ActiveQuadrature obs(dgp, dgp.obs, q.order);

  const Matrix gram = rct.expect_matrix(p, p, [&](Covariate x, Matrix& out) {
    const Vector v = psi.eval(dgp.delta(x));
    out = v * v.transpose();
  });
  const Vector mu_psi = rct.expect_matrix(p, 1, [&](Covariate x, Matrix& out) {
    out = dgp.mu(x) * psi.eval(dgp.delta(x));
  });
  const Vector obs_psi = obs.expect_matrix(p, 1, [&](Covariate x, Matrix& out) {
    out = psi.eval(dgp.delta(x));
  });

  Matrix rhs(p, 2);
  rhs.col(0) = mu_psi;
  rhs.col(1) = obs_psi;
  const auto sol = linalg::solve_spd(gram, rhs);
  OracleEstimands e;
  e.beta_bar = sol.x.col(0);
  e.alpha_bar = sol.x.col(1);
  e.tau_bar = obs_psi.dot(e.beta_bar);
  e.tau = obs.expect([&](Covariate x) { return dgp.mu(x); });
  const double s2 = dgp.sigma_d * dgp.sigma_d;
  e.sigma = rct.expect([&](Covariate x) {
    const Vector v = psi.eval(dgp.delta(x));
    const double resid = dgp.mu(x) - v.dot(e.beta_bar);
    const double a = e.alpha_bar.dot(v);
    return (s2 + resid * resid) * a * a;
  });
  return e;
}

inline double mu_bar(Covariate x, const DgpSpec& dgp, const BasisExpansion& psi,
                     const OracleEstimands& est) {
  return psi.eval(dgp.delta(x)).dot(est.beta_bar);
}

struct WeightGamma {
  Vector gamma;
  /// mu lies in span{psi(Delta)} under the experimental law, so w == 1.
  bool well_specified = false;
  Vector b;  // E_rct[mu (mu - mu_bar) psi]
  Matrix a;  // E_rct[Lambda (mu - mu_bar)^2 psi psi^T]
  double c = 0.0;  // E_obs[mu - mu_bar] = tau - tau_bar
};

/// Minimum-variance gamma: c / (b^T A^-1 b) A^-1 b.
inline WeightGamma weight_gamma_minvar(const DgpSpec& dgp, const BasisExpansion& psi,
                                       const OracleEstimands& est, const QuadratureSpec& q = {}) {
  const int p = psi.p();
  const detail::ActiveQuadrature rct(dgp, dgp.rct, q.order);
  WeightGamma out;
  out.c = est.tau - est.tau_bar;
  const double misfit = rct.expect([&](Covariate x) {
    const double r = dgp.mu(x) - mu_bar(x, dgp, psi, est);
    return r * r;
  });
  const double scale = rct.expect([&](Covariate x) { return dgp.mu(x) * dgp.mu(x); });
  out.b = rct.expect_matrix(p, 1, [&](Covariate x, Matrix& m) {
    const Vector v = psi.eval(dgp.delta(x));
    m = dgp.mu(x) * (dgp.mu(x) - v.dot(est.beta_bar)) * v;
  });
  if (misfit <= 1e-20 * (1.0 + scale)) {
    out.well_specified = true;
    out.gamma = Vector::Zero(p);
    out.a = Matrix::Zero(p, p);
    return out;
  }
  out.a = rct.expect_matrix(p, p, [&](Covariate x, Matrix& m) {
    const Vector v = psi.eval(dgp.delta(x));
    const double r = dgp.mu(x) - v.dot(est.beta_bar);
    m = dgp.likelihood_ratio(x) * r * r * (v * v.transpose());
  });
  Vector a_inv_b;
  try {
    a_inv_b = linalg::solve_spd(out.a, out.b).x;
  } catch (const Error& e) {
    throw Error(ErrorKind::numerical, std::string("weight_gamma_minvar: quadrature-degenerate A: ") + e.what());
  }
  const double denom = out.b.dot(a_inv_b);
  if (!(std::abs(denom) > 0.0)) {
    out.gamma = Vector::Zero(p);
    return out;
  }
  out.gamma = out.c / denom * a_inv_b;
  return out;
}

/// w(x) = 1 - Lambda(x) (mu(x) - mu_bar(x)) psi(Delta(x))^T gamma.
inline double weight_function(Covariate x, const DgpSpec& dgp, const BasisExpansion& psi,
                              const OracleEstimands& est, const Vector& gamma) {
  const Vector v = psi.eval(dgp.delta(x));
  const double r = dgp.mu(x) - v.dot(est.beta_bar);
  return 1.0 - dgp.likelihood_ratio(x) * r * v.dot(gamma);
}

/// pi(x) = rho2 Lambda / (rho2 Lambda + 1 - rho2).
inline double sampling_propensity_from_ratio(double lambda, double rho2) {
  if (!(rho2 > 0.0 && rho2 < 1.0)) throw invalid_argument("sampling_propensity: rho2 must lie in (0, 1)");
  if (!(lambda >= 0.0)) throw invalid_argument("sampling_propensity: likelihood ratio must be >= 0");
  return rho2 * lambda / (rho2 * lambda + (1.0 - rho2));
}

inline double sampling_propensity(Covariate x, double rho2, const DgpSpec& dgp) {
  return sampling_propensity_from_ratio(dgp.likelihood_ratio(x), rho2);
}

/// One draw w = (q, x, y) from the fused sample: q = 2 experimental, q = z
/// observational.
struct NestedObservation {
  int q = 0;
  std::vector<double> x;
  double y = 0.0;
};

/// True nuisances of the fused-sample model for one rho2.
struct NestedNuisances {
  DgpSpec dgp;
  BasisExpansion psi;
  OracleEstimands est;
  double rho2 = 0.5;

  static NestedNuisances from_dgp(const DgpSpec& dgp, const BasisExpansion& psi,
                                  const OracleEstimands& est, double rho2) {
    if (!(rho2 > 0.0 && rho2 < 1.0)) throw invalid_argument("rho2 must lie in (0, 1)");
    return {dgp, psi, est, rho2};
  }

  double r(Covariate x) const { return dgp.propensity(x); }
  double lambda(Covariate x) const { return dgp.likelihood_ratio(x); }
  double m(int q, Covariate x) const {
    switch (q) {
      case 0: return dgp.m0(x);
      case 1: return dgp.m1(x);
      case 2: return dgp.mu(x);
      default: throw invalid_argument("q must be 0, 1 or 2");
    }
  }
  double mu_bar(Covariate x) const { return tcal::mu_bar(x, dgp, psi, est); }

  /// psi-dot^T beta + Lambda alpha^T (m2 psi-dot - [psi psi-dot^T + psi-dot psi^T] beta).
  double kappa(Covariate x) const {
    const double delta = dgp.delta(x);
    const Vector v = psi.eval(delta);
    const Vector vd = psi.derivative(delta);
    const Vector inner =
        dgp.mu(x) * vd - (v * vd.transpose() + vd * v.transpose()) * est.beta_bar;
    return vd.dot(est.beta_bar) + lambda(x) * est.alpha_bar.dot(inner);
  }

  double iota(const NestedObservation& w) const {
    const Covariate x(w.x);
    if (w.q == 2) return 0.0;
    const double rx = r(x);
    if (w.q == 1) {
      if (!(rx > 0.0)) throw Error(ErrorKind::numerical, "eif: r(x) = 0 with q = 1 (division by zero)");
      return (w.y - dgp.m1(x)) / rx;
    }
    if (w.q == 0) {
      if (!(rx < 1.0)) throw Error(ErrorKind::numerical, "eif: r(x) = 1 with q = 0 (division by zero)");
      return -(w.y - dgp.m0(x)) / (1.0 - rx);
    }
    throw invalid_argument("q must be 0, 1 or 2");
  }
};

/// Efficient influence function of tau_bar with estimated contrast.
inline double eif_eval(const NestedObservation& w, const NestedNuisances& nu) {
  const Covariate x(w.x);
  const double mb = nu.mu_bar(x);
  if (w.q == 2) {
    return (w.y - mb) * nu.est.alpha_bar.dot(nu.psi.eval(nu.dgp.delta(x))) / nu.rho2;
  }
  return (mb - nu.est.tau_bar + nu.iota(w) * nu.kappa(x)) / (1.0 - nu.rho2);
}

/// Efficient influence function when the contrast is known (no iota-kappa term).
inline double eif_known_delta(const NestedObservation& w, const NestedNuisances& nu) {
  if (w.q != 0 && w.q != 1 && w.q != 2) throw invalid_argument("q must be 0, 1 or 2");
  const Covariate x(w.x);
  const double mb = nu.mu_bar(x);
  if (w.q == 2) {
    return (w.y - mb) * nu.est.alpha_bar.dot(nu.psi.eval(nu.dgp.delta(x))) / nu.rho2;
  }
  return (mb - nu.est.tau_bar) / (1.0 - nu.rho2);
}

/// Draws from the experimental (q = 2) conditional law.
inline void draw_experimental(const DgpSpec& dgp, RngStream& rng, NestedObservation& w) {
  w.x.resize(static_cast<std::size_t>(dgp.dim));
  for (std::size_t j = 0; j < w.x.size(); ++j) w.x[j] = rng.normal(dgp.rct.mean[j], dgp.rct.sd[j]);
  w.q = 2;
  w.y = dgp.mu(Covariate(w.x)) + dgp.sigma_d * rng.normal();
}

/// Draws from the observational (q != 2) conditional law.
inline void draw_observational(const DgpSpec& dgp, RngStream& rng, NestedObservation& w) {
  w.x.resize(static_cast<std::size_t>(dgp.dim));
  for (std::size_t j = 0; j < w.x.size(); ++j) w.x[j] = rng.normal(dgp.obs.mean[j], dgp.obs.sd[j]);
  const Covariate x(w.x);
  w.q = rng.bernoulli(dgp.propensity(x)) ? 1 : 0;
  w.y = (w.q == 1 ? dgp.m1(x) : dgp.m0(x)) + dgp.sigma_y * rng.normal();
}

inline void draw_nested(const NestedNuisances& nu, RngStream& rng, NestedObservation& w) {
  if (rng.bernoulli(nu.rho2)) {
    draw_experimental(nu.dgp, rng, w);
  } else {
    draw_observational(nu.dgp, rng, w);
  }
}

/// Mean and standard error of a Monte Carlo sample, plus the sample variance
/// and its standard error.
struct MomentSummary {
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;
  std::size_t count = 0;
};

class MomentAccumulator {
 public:
  void add(double v) {
    ++n_;
    // Power sums about the first value, to limit cancellation.
    if (n_ == 1) shift_ = v;
    const double d = v - shift_;
    s1_ += d;
    s2_ += d * d;
    s3_ += d * d * d;
    s4_ += d * d * d * d;
  }

  MomentSummary summary() const {
    MomentSummary s;
    s.count = n_;
    if (n_ == 0) return s;
    const double n = static_cast<double>(n_);
    const double m1 = s1_ / n;
    const double r2 = s2_ / n, r3 = s3_ / n, r4 = s4_ / n;
    const double c2 = r2 - m1 * m1;
    const double c4 = r4 - 4 * m1 * r3 + 6 * m1 * m1 * r2 - 3 * m1 * m1 * m1 * m1;
    s.mean = shift_ + m1;
    s.variance = std::max(0.0, c2) * n / std::max(1.0, n - 1.0);
    s.mean_se = std::sqrt(s.variance / n);
    s.variance_se = std::sqrt(std::max(0.0, c4 - c2 * c2) / n);
    return s;
  }

 private:
  std::size_t n_ = 0;
  double shift_ = 0.0;
  double s1_ = 0.0, s2_ = 0.0, s3_ = 0.0, s4_ = 0.0;
};

/// Plain Monte Carlo of an influence function over the fused-sample law.
template <class Eif>
MomentSummary eif_monte_carlo(const NestedNuisances& nu, Eif&& eif, std::size_t draws,
                              RngStream rng) {
  MomentAccumulator acc;
  NestedObservation w;
  for (std::size_t i = 0; i < draws; ++i) {
    draw_nested(nu, rng, w);
    acc.add(eif(w, nu));
  }
  return acc.summary();
}

/// E1 = E_obs[(mu_bar - tau_bar + iota kappa)^2] by quadrature, using
/// E[iota^2 | X] = sigma_Y^2 (1/r + 1/(1-r)).
inline double efficiency_e1(const DgpSpec& dgp, const BasisExpansion& psi,
                            const OracleEstimands& est, const QuadratureSpec& q = {}) {
  const NestedNuisances nu = NestedNuisances::from_dgp(dgp, psi, est, 0.5);
  const detail::ActiveQuadrature obs(dgp, dgp.obs, q.order);
  const double s2 = dgp.sigma_y * dgp.sigma_y;
  return obs.expect([&](Covariate x) {
    const double c = nu.mu_bar(x) - est.tau_bar;
    const double k = nu.kappa(x);
    const double r = dgp.propensity(x);
    return c * c + k * k * s2 * (1.0 / r + 1.0 / (1.0 - r));
  });
}

struct EfficiencyRow {
  double rho2 = 0.0;
  double rho2_veff = 0.0;  // Monte Carlo
  double rho2_veff_se = 0.0;
  double sigma = 0.0;      // quadrature
  double e1 = 0.0;         // quadrature
  double predicted_gap = 0.0;  // rho2/(1-rho2) E1
};

/// rho2 V_eff = rho2/(1-rho2) E1 + E2 with E1 and E2 estimated by stratified
/// Monte Carlo over the two conditional laws (which do not depend on rho2).
inline std::vector<EfficiencyRow> efficiency_limit_check(
    const std::function<NestedNuisances(double)>& family, const std::vector<double>& rho_grid,
    std::size_t draws_per_stratum, RngStream rng, const QuadratureSpec& q = {}) {
  if (rho_grid.empty()) return {};
  const NestedNuisances base = family(rho_grid.front());
  MomentAccumulator e1_acc, e2_acc;
  RngStream obs_rng = rng.substream(1);
  RngStream rct_rng = rng.substream(2);
  NestedObservation w;
  for (std::size_t i = 0; i < draws_per_stratum; ++i) {
    draw_observational(base.dgp, obs_rng, w);
    const Covariate x(w.x);
    const double t = base.mu_bar(x) - base.est.tau_bar + base.iota(w) * base.kappa(x);
    e1_acc.add(t * t);
    draw_experimental(base.dgp, rct_rng, w);
    const Covariate xr(w.x);
    const double a = base.est.alpha_bar.dot(base.psi.eval(base.dgp.delta(xr)));
    const double u = (w.y - base.mu_bar(xr)) * a;
    e2_acc.add(u * u);
  }
  const MomentSummary e1 = e1_acc.summary();
  const MomentSummary e2 = e2_acc.summary();
  const double e1_quad = efficiency_e1(base.dgp, base.psi, base.est, q);

  std::vector<EfficiencyRow> out;
  for (double rho2 : rho_grid) {
    const NestedNuisances nu = family(rho2);
    EfficiencyRow row;
    row.rho2 = rho2;
    const double f = rho2 / (1.0 - rho2);
    row.rho2_veff = f * e1.mean + e2.mean;
    row.rho2_veff_se = std::sqrt(f * f * e1.mean_se * e1.mean_se + e2.mean_se * e2.mean_se);
    row.sigma = nu.est.sigma;
    row.e1 = e1_quad;
    row.predicted_gap = f * e1_quad;
    out.push_back(row);
  }
  return out;
}

}  // namespace tcal
