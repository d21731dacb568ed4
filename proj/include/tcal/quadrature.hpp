#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "tcal/core/error.hpp"

namespace tcal {

/// Gauss–Hermite rule for the weight exp(-t^2).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes and weights by Newton iteration on the orthonormal Hermite
/// recurrence (Golub–Welsch style normalization keeps orders of a few hundred
/// stable). Weights sum to sqrt(pi).
inline GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw invalid_argument("gauss_hermite: order must be >= 1");
  const int n = order;
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  GaussHermiteRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);

  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    // Initial guesses for the largest roots first.
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * rule.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * rule.nodes[1];
    } else {
      z = 2.0 * z - rule.nodes[static_cast<std::size_t>(i - 2)];
    }
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = z;
    rule.nodes[hi] = -z;
    rule.weights[lo] = 2.0 / (pp * pp);
    rule.weights[hi] = rule.weights[lo];
  }
  // Ascending order.
  std::reverse(rule.nodes.begin(), rule.nodes.end());
  std::reverse(rule.weights.begin(), rule.weights.end());
  return rule;
}

/// Tensor-product rule for E[f(X)] with independent X_j ~ N(mean_j, sd_j^2).
/// Points are stored row-wise (dim entries each); weights sum to 1.
class GaussianQuadrature {
 public:
  GaussianQuadrature(std::span<const double> means, std::span<const double> sds, int order) {
    if (means.size() != sds.size() || means.empty()) {
      throw invalid_argument("GaussianQuadrature: means/sds must be non-empty and equal length");
    }
    dim_ = means.size();
    const auto rule = gauss_hermite(order);
    const std::size_t per = rule.nodes.size();
    std::size_t total = 1;
    for (std::size_t d = 0; d < dim_; ++d) total *= per;
    points_.resize(total * dim_);
    weights_.resize(total);
    const double norm = 1.0 / std::sqrt(std::numbers::pi);
    std::vector<std::size_t> idx(dim_, 0);
    for (std::size_t k = 0; k < total; ++k) {
      double w = 1.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double t = rule.nodes[idx[d]];
        points_[k * dim_ + d] = means[d] + sds[d] * std::numbers::sqrt2 * t;
        w *= rule.weights[idx[d]] * norm;
      }
      weights_[k] = w;
      for (std::size_t d = 0; d < dim_; ++d) {
        if (++idx[d] < per) break;
        idx[d] = 0;
      }
    }
  }

  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> point(std::size_t k) const noexcept {
    return {points_.data() + k * dim_, dim_};
  }
  double weight(std::size_t k) const noexcept { return weights_[k]; }

  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < size(); ++k) acc += weights_[k] * f(point(k));
    return acc;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> points_;
  std::vector<double> weights_;
};

}  // namespace tcal
