#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcal/core/error.hpp"

namespace tcal::linalg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Result of a guarded symmetric positive-definite solve.
struct SpdSolution {
  MatrixXd x;  // one column per right-hand side
  double condition_number = 1.0;
  bool used_qr = false;
};

/// Solves G x = rhs for symmetric PSD G.
///
/// Rejects G whose smallest eigenvalue is at or below `rel_floor` times its
/// largest. Uses Cholesky when cond(G) <= qr_threshold and a column-pivoted
/// QR otherwise.
inline SpdSolution solve_spd(const MatrixXd& gram, const MatrixXd& rhs, double rel_floor = 1e-12,
                             double qr_threshold = 1e8) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= rel_floor * hi) {
    throw Error(ErrorKind::collinearity,
                "Gram matrix is singular (smallest/largest eigenvalue " +
                    std::to_string(hi > 0.0 ? lo / hi : 0.0) +
                    "); the basis components are collinear, try a smaller basis");
  }
  SpdSolution out;
  out.condition_number = hi / lo;
  if (out.condition_number <= qr_threshold) {
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() == Eigen::Success) {
      out.x = llt.solve(rhs);
      return out;
    }
  }
  out.used_qr = true;
  out.x = gram.colPivHouseholderQr().solve(rhs);
  return out;
}

/// Fitted ridge regression y ~ b0 + X b with an unpenalized intercept.
/// Columns are standardized internally; coefficients are reported on the
/// original scale.
struct RidgeFit {
  double intercept = 0.0;
  VectorXd coef;
  double penalty = 0.0;
  double effective_df = 0.0;
  double gcv = 0.0;

  double predict(const double* x) const {
    double v = intercept;
    for (Index j = 0; j < coef.size(); ++j) v += coef(j) * x[j];
    return v;
  }

  template <class Derived>
  VectorXd predict(const Eigen::MatrixBase<Derived>& x) const {
    return (x * coef).array() + intercept;
  }
};

struct RidgeOptions {
  /// Fixed penalty on the standardized scale; nullopt selects by GCV.
  std::optional<double> penalty;
  /// Log10 grid searched by GCV.
  double log10_min = -8.0;
  double log10_max = 8.0;
  int grid_points = 65;
};

/// Ridge regression with generalized cross-validation over a log grid.
///
/// The penalty applies to standardized columns, so it is unit-free; constant
/// columns get a zero coefficient. Throws a numerical-rank error when the
/// penalized system is singular (zero penalty with collinear columns).
template <class DerivedX>
RidgeFit ridge_fit(const Eigen::MatrixBase<DerivedX>& x, const VectorXd& y,
                   const RidgeOptions& opts = {}) {
  const Index n = x.rows();
  const Index q = x.cols();
  if (n == 0 || y.size() != n) throw invalid_argument("ridge_fit: empty or mismatched input");

  const double y_mean = y.mean();
  RidgeFit fit;
  fit.coef = VectorXd::Zero(q);

  VectorXd mean = x.colwise().mean().transpose();
  VectorXd scale(q);
  std::vector<Index> active;
  for (Index j = 0; j < q; ++j) {
    const double var = (x.col(j).array() - mean(j)).square().sum() / static_cast<double>(n);
    const double mag = std::max(1.0, std::abs(mean(j)));
    scale(j) = std::sqrt(var);
    if (scale(j) > 1e-12 * mag) active.push_back(j);
  }

  if (active.empty()) {
    fit.intercept = y_mean;
    fit.penalty = opts.penalty.value_or(0.0);
    const double rss = (y.array() - y_mean).square().sum();
    fit.effective_df = 1.0;
    const double denom = 1.0 - 1.0 / static_cast<double>(n);
    fit.gcv = denom > 0 ? rss / static_cast<double>(n) / (denom * denom)
                        : std::numeric_limits<double>::infinity();
    return fit;
  }

  const auto a = static_cast<Index>(active.size());
  MatrixXd z(n, a);
  for (Index k = 0; k < a; ++k) {
    const Index j = active[static_cast<std::size_t>(k)];
    z.col(k) = (x.col(j).array() - mean(j)) / scale(j);
  }
  const VectorXd yc = y.array() - y_mean;

  Eigen::JacobiSVD<MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd s = svd.singularValues();
  const VectorXd uty = svd.matrixU().transpose() * yc;
  const double s2max = s.size() > 0 ? s(0) * s(0) : 0.0;
  const double yc_ss = yc.squaredNorm();
  const double resid_outside = std::max(0.0, yc_ss - uty.squaredNorm());

  auto evaluate = [&](double lambda, double& df, double& rss) {
    df = 1.0;  // intercept
    rss = resid_outside;
    for (Index k = 0; k < s.size(); ++k) {
      const double s2 = s(k) * s(k);
      const double shrink = (s2 + lambda) > 0.0 ? s2 / (s2 + lambda) : 0.0;
      df += shrink;
      const double r = (1.0 - shrink) * uty(k);
      rss += r * r;
    }
  };

  double lambda = 0.0;
  if (opts.penalty) {
    lambda = *opts.penalty;
    if (!(lambda >= 0.0)) throw invalid_argument("ridge_fit: penalty must be >= 0");
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g < opts.grid_points; ++g) {
      const double t = opts.grid_points == 1
                           ? opts.log10_min
                           : opts.log10_min + (opts.log10_max - opts.log10_min) * g /
                                                  (opts.grid_points - 1);
      const double lam = std::pow(10.0, t);
      double df = 0.0, rss = 0.0;
      evaluate(lam, df, rss);
      const double denom = 1.0 - df / static_cast<double>(n);
      if (denom <= 1e-8) continue;
      const double gcv = rss / static_cast<double>(n) / (denom * denom);
      if (gcv < best) {
        best = gcv;
        lambda = lam;
      }
    }
    if (!std::isfinite(best)) lambda = std::pow(10.0, opts.log10_max);
  }

  // Directions missing from the thin SVD have singular value zero.
  const double s_min = (s.size() < a || s.size() == 0) ? 0.0 : s(s.size() - 1);
  if (s_min * s_min + lambda <= 1e-14 * std::max(s2max, 1.0)) {
    throw Error(ErrorKind::numerical,
                "ridge_fit: feature matrix is numerically rank deficient at penalty " +
                    std::to_string(lambda));
  }

  VectorXd shrunk(s.size());
  for (Index k = 0; k < s.size(); ++k) shrunk(k) = s(k) / (s(k) * s(k) + lambda) * uty(k);
  const VectorXd beta_std = svd.matrixV() * shrunk;

  fit.intercept = y_mean;
  for (Index k = 0; k < a; ++k) {
    const Index j = active[static_cast<std::size_t>(k)];
    fit.coef(j) = beta_std(k) / scale(j);
    fit.intercept -= fit.coef(j) * mean(j);
  }
  double df = 0.0, rss = 0.0;
  evaluate(lambda, df, rss);
  fit.penalty = lambda;
  fit.effective_df = df;
  const double denom = 1.0 - df / static_cast<double>(n);
  fit.gcv = denom > 0 ? rss / static_cast<double>(n) / (denom * denom)
                      : std::numeric_limits<double>::infinity();
  return fit;
}

}  // namespace tcal::linalg
