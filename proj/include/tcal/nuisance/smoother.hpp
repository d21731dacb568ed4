#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tcal/core/error.hpp"

namespace tcal {

struct SmootherOptions {
  /// Overrides the Silverman bandwidth when set.
  std::optional<double> bandwidth;
  /// Training sizes above this use a linearly binned grid for prediction.
  std::size_t exact_limit = 2048;
  /// Grid spacing as a fraction of the bandwidth in binned mode.
  double grid_step_per_bandwidth = 0.125;
  std::size_t max_grid = 1u << 16;
};

/// Gaussian-kernel Nadaraya–Watson regression of v on scalar u.
///
/// Every prediction is a ratio of nonnegative kernel-weighted sums, so it is a
/// convex combination of the training responses.
class SmootherFit {
 public:
  SmootherFit() = default;

  double bandwidth() const noexcept { return h_; }
  bool degenerate() const noexcept { return degenerate_; }
  bool binned() const noexcept { return !grid_num_.empty(); }
  std::size_t size() const noexcept { return u_.size(); }
  double min_response() const noexcept { return v_min_; }
  double max_response() const noexcept { return v_max_; }

  double predict(double u) const {
    if (degenerate_) return v_mean_;
    double out;
    if (binned() && u >= grid_lo_ && u <= grid_hi_) {
      out = predict_binned(u);
    } else {
      out = predict_exact(u);
    }
    return std::clamp(out, v_min_, v_max_);
  }

  Eigen::VectorXd predict(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = predict(u(i));
    return out;
  }

  /// Direct kernel sum over every training pair (no binning, no window).
  double predict_direct(double u) const {
    if (degenerate_) return v_mean_;
    double dmin = std::numeric_limits<double>::infinity();
    for (double ui : u_) dmin = std::min(dmin, std::abs(u - ui));
    const double inv = 1.0 / (2.0 * h_ * h_);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const double d = u - u_[i];
      const double w = std::exp(-(d * d - dmin * dmin) * inv);
      num += w * v_[i];
      den += w;
    }
    return num / den;
  }

 private:
  friend SmootherFit fit_smoother(std::span<const double>, std::span<const double>,
                                  const SmootherOptions&);

  // Kernel sum over the window where weights exceed e^-40 relative to the
  // nearest training point.
  double predict_exact(double u) const {
    const auto it = std::lower_bound(u_.begin(), u_.end(), u);
    double dmin = std::numeric_limits<double>::infinity();
    if (it != u_.end()) dmin = std::min(dmin, *it - u);
    if (it != u_.begin()) dmin = std::min(dmin, u - *(it - 1));
    const double radius = std::sqrt(dmin * dmin + 80.0 * h_ * h_);
    const auto lo = std::lower_bound(u_.begin(), u_.end(), u - radius);
    const auto hi = std::upper_bound(u_.begin(), u_.end(), u + radius);
    const double inv = 1.0 / (2.0 * h_ * h_);
    double num = 0.0, den = 0.0;
    for (auto p = lo; p != hi; ++p) {
      const auto i = static_cast<std::size_t>(p - u_.begin());
      const double d = u - u_[i];
      const double w = std::exp(-(d * d - dmin * dmin) * inv);
      num += w * v_[i];
      den += w;
    }
    return num / den;
  }

  double predict_binned(double u) const {
    const double t = (u - grid_lo_) / grid_step_;
    auto g = static_cast<std::size_t>(t);
    if (g >= grid_num_.size() - 1) g = grid_num_.size() - 2;
    const double frac = t - static_cast<double>(g);
    const double num = (1.0 - frac) * grid_num_[g] + frac * grid_num_[g + 1];
    const double den = (1.0 - frac) * grid_den_[g] + frac * grid_den_[g + 1];
    if (!(den > 1e-300)) return predict_exact(u);
    return num / den;
  }

  void build_grid(const SmootherOptions& opts) {
    const double lo = u_.front();
    const double hi = u_.back();
    const double step_target = opts.grid_step_per_bandwidth * h_;
    const double span = hi - lo;
    const auto needed = static_cast<std::size_t>(std::ceil(span / step_target)) + 1;
    if (needed < 2 || needed > opts.max_grid) return;  // stay exact
    const std::size_t g_count = std::max<std::size_t>(needed, 2);
    grid_lo_ = lo;
    grid_hi_ = hi;
    grid_step_ = span / static_cast<double>(g_count - 1);

    std::vector<double> mass(g_count, 0.0), sum(g_count, 0.0);
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const double t = (u_[i] - lo) / grid_step_;
      auto g = static_cast<std::size_t>(t);
      if (g >= g_count - 1) g = g_count - 2;
      const double frac = std::clamp(t - static_cast<double>(g), 0.0, 1.0);
      mass[g] += 1.0 - frac;
      mass[g + 1] += frac;
      sum[g] += (1.0 - frac) * v_[i];
      sum[g + 1] += frac * v_[i];
    }
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(std::sqrt(80.0) * h_ / grid_step_));
    std::vector<double> kernel(static_cast<std::size_t>(reach) + 1);
    for (std::ptrdiff_t l = 0; l <= reach; ++l) {
      const double d = static_cast<double>(l) * grid_step_;
      kernel[static_cast<std::size_t>(l)] = std::exp(-d * d / (2.0 * h_ * h_));
    }
    grid_num_.assign(g_count, 0.0);
    grid_den_.assign(g_count, 0.0);
    const auto n = static_cast<std::ptrdiff_t>(g_count);
    for (std::ptrdiff_t g = 0; g < n; ++g) {
      const std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, g - reach);
      const std::ptrdiff_t b = std::min<std::ptrdiff_t>(n - 1, g + reach);
      double num = 0.0, den = 0.0;
      for (std::ptrdiff_t k = a; k <= b; ++k) {
        const double w = kernel[static_cast<std::size_t>(std::abs(k - g))];
        num += w * sum[static_cast<std::size_t>(k)];
        den += w * mass[static_cast<std::size_t>(k)];
      }
      grid_num_[static_cast<std::size_t>(g)] = num;
      grid_den_[static_cast<std::size_t>(g)] = den;
    }
  }

  std::vector<double> u_;
  std::vector<double> v_;
  double h_ = 0.0;
  bool degenerate_ = false;
  double v_mean_ = 0.0;
  double v_min_ = 0.0;
  double v_max_ = 0.0;

  double grid_lo_ = 0.0;
  double grid_hi_ = 0.0;
  double grid_step_ = 0.0;
  std::vector<double> grid_num_;
  std::vector<double> grid_den_;
};

/// Silverman's rule of thumb, 1.06 * sd(u) * m^(-1/5).
inline double silverman_bandwidth(std::span<const double> u) {
  const auto m = static_cast<double>(u.size());
  const double mean = std::accumulate(u.begin(), u.end(), 0.0) / m;
  double ss = 0.0;
  for (double x : u) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / std::max(1.0, m - 1.0));
  return 1.06 * sd * std::pow(m, -0.2);
}

inline SmootherFit fit_smoother(std::span<const double> u, std::span<const double> v,
                                const SmootherOptions& opts = {}) {
  if (u.size() != v.size()) throw invalid_argument("fit_smoother: u and v differ in length");
  if (u.size() < 5) throw invalid_argument("fit_smoother: at least 5 pairs are required");
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
      throw invalid_argument("fit_smoother: non-finite input");
    }
  }
  SmootherFit fit;
  const auto m = u.size();
  fit.v_mean_ = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(m);
  fit.v_min_ = *std::min_element(v.begin(), v.end());
  fit.v_max_ = *std::max_element(v.begin(), v.end());

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  fit.u_.resize(m);
  fit.v_.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    fit.u_[i] = u[order[i]];
    fit.v_[i] = v[order[i]];
  }

  const double h = opts.bandwidth ? *opts.bandwidth : silverman_bandwidth(u);
  if (opts.bandwidth && !(h > 0.0)) throw invalid_argument("fit_smoother: bandwidth must be > 0");
  if (!(h > 0.0) || fit.u_.front() == fit.u_.back()) {
    fit.degenerate_ = true;
    fit.h_ = 0.0;
    return fit;
  }
  fit.h_ = h;
  if (m > opts.exact_limit) fit.build_grid(opts);
  return fit;
}

}  // namespace tcal
