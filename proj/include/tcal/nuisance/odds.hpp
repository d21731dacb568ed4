#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"

namespace tcal {

struct OddsOptions {
  /// Probabilities are clipped to [clip, 1 - clip].
  double clip = 1e-6;
  /// Ridge penalty on non-intercept coefficients (standardized scale).
  double ridge = 1e-6;
  int max_iter = 100;
  double tol = 1e-8;
  /// |coefficient| above this flags separation.
  double separation_threshold = 30.0;
};

/// Logistic model for P(experimental | features); reports the odds of the
/// observational class, (1 - p) / p.
class OddsFit {
 public:
  OddsFit() = default;

  double prob_experimental(std::span<const double> f) const {
    double eta = coef_(0);
    for (Eigen::Index j = 0; j < mean_.size(); ++j) {
      if (!active_[static_cast<std::size_t>(j)]) continue;
      eta += coef_(j + 1) * (f[static_cast<std::size_t>(j)] - mean_(j)) / scale_(j);
    }
    const double p = 1.0 / (1.0 + std::exp(-eta));
    return std::clamp(p, clip_, 1.0 - clip_);
  }

  double odds(std::span<const double> f) const {
    const double p = prob_experimental(f);
    return (1.0 - p) / p;
  }

  double odds(double f) const { return odds(std::span<const double>(&f, 1)); }

  Vector odds(const RowMatrix& f) const {
    Vector out(f.rows());
    for (Eigen::Index i = 0; i < f.rows(); ++i) out(i) = odds(row_of(f, i));
    return out;
  }

  /// Intercept followed by per-feature coefficients on the original scale.
  Vector coefficients() const {
    Vector out = Vector::Zero(mean_.size() + 1);
    out(0) = coef_(0);
    for (Eigen::Index j = 0; j < mean_.size(); ++j) {
      if (!active_[static_cast<std::size_t>(j)]) continue;
      out(j + 1) = coef_(j + 1) / scale_(j);
      out(0) -= out(j + 1) * mean_(j);
    }
    return out;
  }

  double prob_clip() const noexcept { return clip_; }
  bool converged() const noexcept { return converged_; }
  int iterations() const noexcept { return iterations_; }
  bool separation() const noexcept { return separation_; }
  /// Training rows whose fitted probability hit a clip bound.
  std::size_t clip_count() const noexcept { return clip_count_; }
  std::size_t n_experimental() const noexcept { return n_exp_; }
  std::size_t n_observational() const noexcept { return n_obs_; }

 private:
  friend OddsFit fit_odds(const RowMatrix&, std::span<const int>, const OddsOptions&);

  Vector mean_;
  Vector scale_;
  std::vector<bool> active_;
  Vector coef_;  // standardized scale, intercept first
  double clip_ = 1e-6;
  bool converged_ = false;
  int iterations_ = 0;
  bool separation_ = false;
  std::size_t clip_count_ = 0;
  std::size_t n_exp_ = 0;
  std::size_t n_obs_ = 0;
};

/// Penalized logistic regression by Newton/IRLS with step halving.
inline OddsFit fit_odds(const RowMatrix& features, std::span<const int> is_experimental,
                        const OddsOptions& opts = {}) {
  const Eigen::Index m = features.rows();
  const Eigen::Index q = features.cols();
  if (static_cast<std::size_t>(m) != is_experimental.size()) {
    throw invalid_argument("fit_odds: features and labels differ in length");
  }
  if (!(opts.clip > 0.0 && opts.clip < 0.5)) throw invalid_argument("fit_odds: clip must lie in (0, 0.5)");
  OddsFit fit;
  fit.clip_ = opts.clip;
  for (int c : is_experimental) {
    if (c == 1) ++fit.n_exp_;
    else if (c == 0) ++fit.n_obs_;
    else throw invalid_argument("fit_odds: labels must be 0 or 1");
  }
  if (fit.n_exp_ == 0 || fit.n_obs_ == 0) {
    throw invalid_argument("fit_odds: both classes must be present");
  }

  fit.mean_ = features.colwise().mean().transpose();
  fit.scale_.resize(q);
  fit.active_.assign(static_cast<std::size_t>(q), false);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double var = (features.col(j).array() - fit.mean_(j)).square().mean();
    fit.scale_(j) = std::sqrt(var);
    fit.active_[static_cast<std::size_t>(j)] =
        fit.scale_(j) > 1e-12 * std::max(1.0, std::abs(fit.mean_(j)));
    if (!fit.active_[static_cast<std::size_t>(j)]) fit.scale_(j) = 1.0;
  }

  Eigen::MatrixXd xt(m, q + 1);
  xt.col(0).setOnes();
  for (Eigen::Index j = 0; j < q; ++j) {
    if (fit.active_[static_cast<std::size_t>(j)]) {
      xt.col(j + 1) = (features.col(j).array() - fit.mean_(j)) / fit.scale_(j);
    } else {
      xt.col(j + 1).setZero();
    }
  }
  Vector y(m);
  for (Eigen::Index i = 0; i < m; ++i) y(i) = is_experimental[static_cast<std::size_t>(i)];

  Vector penalty = Vector::Constant(q + 1, opts.ridge);
  penalty(0) = 0.0;
  for (Eigen::Index j = 0; j < q; ++j) {
    if (!fit.active_[static_cast<std::size_t>(j)]) penalty(j + 1) = 1.0;  // pins the coefficient at 0
  }

  const double md = static_cast<double>(m);
  auto objective = [&](const Vector& beta) {
    const Vector eta = xt * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      // log(1 + e^eta) - y*eta, computed stably
      const double e = eta(i);
      ll += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y(i) * e;
    }
    return ll / md + 0.5 * (penalty.array() * beta.array().square()).sum();
  };

  Vector beta = Vector::Zero(q + 1);
  beta(0) = std::log(static_cast<double>(fit.n_exp_) / static_cast<double>(fit.n_obs_));
  double obj = objective(beta);
  for (int it = 0; it < opts.max_iter; ++it) {
    const Vector eta = xt * beta;
    Vector p(m), w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Vector grad = xt.transpose() * (p - y) / md + penalty.cwiseProduct(beta);
    fit.iterations_ = it + 1;
    if (grad.norm() < opts.tol) {
      fit.converged_ = true;
      break;
    }
    Eigen::MatrixXd hess = xt.transpose() * w.asDiagonal() * xt / md;
    hess.diagonal() += penalty;
    const Vector step = hess.ldlt().solve(grad);
    double t = 1.0;
    Vector cand = beta - step;
    double cand_obj = objective(cand);
    while (cand_obj > obj + 1e-15 * std::abs(obj) && t > 1e-10) {
      t *= 0.5;
      cand = beta - t * step;
      cand_obj = objective(cand);
    }
    if (!(cand_obj <= obj + 1e-15 * std::abs(obj))) {
      // No further decrease possible at double precision.
      fit.converged_ = grad.norm() < std::sqrt(opts.tol);
      break;
    }
    beta = cand;
    obj = cand_obj;
  }
  if (!fit.converged_) {
    const Vector eta = xt * beta;
    Vector p(m);
    for (Eigen::Index i = 0; i < m; ++i) p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    const Vector grad = xt.transpose() * (p - y) / md + penalty.cwiseProduct(beta);
    fit.converged_ = grad.norm() < opts.tol;
  }
  fit.coef_ = beta;
  const Vector eta = xt * beta;
  // Large coefficients, or a linear predictor that splits the classes outright
  // (the tiny ridge lets the gradient vanish before coefficients blow up).
  double min_exp = std::numeric_limits<double>::infinity();
  double max_obs = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (y(i) == 1.0) min_exp = std::min(min_exp, eta(i));
    else max_obs = std::max(max_obs, eta(i));
  }
  fit.separation_ = q > 0 && (beta.tail(q).cwiseAbs().maxCoeff() > opts.separation_threshold ||
                              min_exp > max_obs);

  for (Eigen::Index i = 0; i < m; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-eta(i)));
    if (p <= opts.clip || p >= 1.0 - opts.clip) ++fit.clip_count_;
  }
  return fit;
}

/// Degree 1: the covariates. Degree 2: covariates plus all pairwise
/// products x_j x_k with j <= k.
inline RowMatrix odds_features(const RowMatrix& x, int degree) {
  if (degree == 1) return x;
  if (degree != 2) throw invalid_argument("odds feature degree must be 1 or 2");
  const Eigen::Index p = x.cols();
  RowMatrix out(x.rows(), p + p * (p + 1) / 2);
  out.leftCols(p) = x;
  Eigen::Index c = p;
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j; k < p; ++k) out.col(c++) = x.col(j).cwiseProduct(x.col(k));
  }
  return out;
}

}  // namespace tcal
