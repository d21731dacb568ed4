#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "tcal/core/error.hpp"

namespace tcal {

/// Polynomial basis in the (optionally shifted) contrast value:
/// delta -> (1, (delta + c), ..., (delta + c)^degree).
///
/// The first component is always the intercept.
class BasisExpansion {
 public:
  static constexpr int kMaxDegree = 3;

  BasisExpansion() = default;

  explicit BasisExpansion(int degree, double shift = 0.0) : degree_(degree), shift_(shift) {
    if (degree < 0 || degree > kMaxDegree) {
      throw invalid_argument("basis degree must lie in [0, " + std::to_string(kMaxDegree) + "]");
    }
    if (!std::isfinite(shift)) throw invalid_argument("basis shift must be finite");
  }

  /// Parses "poly<d>" (d in 0..3); "linear" is an alias for poly1.
  static BasisExpansion parse(const std::string& name) {
    if (name == "linear") return BasisExpansion(1);
    if (name.size() == 5 && name.rfind("poly", 0) == 0 && name[4] >= '0' && name[4] <= '9') {
      return BasisExpansion(name[4] - '0');
    }
    throw invalid_argument("unknown basis '" + name + "' (expected poly0..poly3)");
  }

  int p() const noexcept { return degree_ + 1; }
  int degree() const noexcept { return degree_; }
  double shift() const noexcept { return shift_; }
  std::string name() const { return "poly" + std::to_string(degree_); }

  template <class Out>
  void eval_into(double delta, Out&& out) const {
    const double t = delta + shift_;
    double v = 1.0;
    for (int j = 0; j <= degree_; ++j) {
      out(j) = v;
      v *= t;
    }
  }

  Eigen::VectorXd eval(double delta) const {
    Eigen::VectorXd out(p());
    eval_into(delta, out);
    return out;
  }

  /// d psi / d delta.
  Eigen::VectorXd derivative(double delta) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p());
    const double t = delta + shift_;
    double v = 1.0;
    for (int j = 1; j <= degree_; ++j) {
      out(j) = j * v;
      v *= t;
    }
    return out;
  }

  /// Rows psi(delta_i)^T.
  Eigen::MatrixXd design(const Eigen::VectorXd& deltas) const {
    Eigen::MatrixXd out(deltas.size(), p());
    for (Eigen::Index i = 0; i < deltas.size(); ++i) {
      const double t = deltas(i) + shift_;
      double v = 1.0;
      for (int j = 0; j <= degree_; ++j) {
        out(i, j) = v;
        v *= t;
      }
    }
    return out;
  }

 private:
  int degree_ = 1;
  double shift_ = 0.0;
};

}  // namespace tcal
