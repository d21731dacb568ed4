#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tcal/core/error.hpp"

namespace tcal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Covariates are stored one row per sample so a row is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Covariate = std::span<const double>;

inline Covariate row_of(const RowMatrix& x, Eigen::Index i) noexcept {
  return {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())};
}

/// One randomized-experiment row: an observed effect measurement D and covariates X.
struct ExperimentalSample {
  double d = 0.0;
  std::vector<double> x;
};

/// One observational row: outcome Y, binary treatment Z, covariates X.
struct ObservationalSample {
  double y = 0.0;
  int z = 0;
  std::vector<double> x;
};

namespace detail {

inline void check_finite_row(const double* v, Eigen::Index p, const char* what, std::size_t row) {
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!std::isfinite(v[j])) {
      throw invalid_argument(std::string(what) + ": non-finite covariate in row " +
                             std::to_string(row));
    }
  }
}

}  // namespace detail

/// Experimental dataset in columnar form.
class ExperimentalData {
 public:
  ExperimentalData() = default;

  ExperimentalData(Vector d, RowMatrix x) : d_(std::move(d)), x_(std::move(x)) { validate(); }

  static ExperimentalData from_rows(std::span<const ExperimentalSample> rows) {
    if (rows.empty()) return {};
    const auto p = static_cast<Eigen::Index>(rows.front().x.size());
    Vector d(static_cast<Eigen::Index>(rows.size()));
    RowMatrix x(static_cast<Eigen::Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].x.size()) != p) {
        throw invalid_argument("experimental row " + std::to_string(i) +
                               " has inconsistent covariate dimension");
      }
      d(static_cast<Eigen::Index>(i)) = rows[i].d;
      for (Eigen::Index j = 0; j < p; ++j) x(static_cast<Eigen::Index>(i), j) = rows[i].x[j];
    }
    return ExperimentalData(std::move(d), std::move(x));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(d_.size()); }
  Eigen::Index dim() const noexcept { return x_.cols(); }
  bool empty() const noexcept { return d_.size() == 0; }

  const Vector& d() const noexcept { return d_; }
  const RowMatrix& x() const noexcept { return x_; }
  Covariate x(std::size_t i) const noexcept { return row_of(x_, static_cast<Eigen::Index>(i)); }

  ExperimentalSample row(std::size_t i) const {
    const auto c = x(i);
    return {d_(static_cast<Eigen::Index>(i)), {c.begin(), c.end()}};
  }

  /// Same covariates, different effect measurements.
  ExperimentalData with_d(Vector d) const { return ExperimentalData(std::move(d), x_); }

 private:
  void validate() const {
    if (d_.size() != x_.rows()) throw invalid_argument("experimental data: d/x length mismatch");
    if (d_.size() > 0 && x_.cols() < 1) throw invalid_argument("experimental data: p_x must be >= 1");
    for (Eigen::Index i = 0; i < d_.size(); ++i) {
      if (!std::isfinite(d_(i))) {
        throw invalid_argument("experimental data: non-finite d in row " + std::to_string(i));
      }
      detail::check_finite_row(x_.data() + i * x_.cols(), x_.cols(), "experimental data",
                               static_cast<std::size_t>(i));
    }
  }

  Vector d_;
  RowMatrix x_;
};

/// Observational dataset in columnar form.
class ObservationalData {
 public:
  ObservationalData() = default;

  ObservationalData(Vector y, Eigen::VectorXi z, RowMatrix x)
      : y_(std::move(y)), z_(std::move(z)), x_(std::move(x)) {
    validate();
  }

  static ObservationalData from_rows(std::span<const ObservationalSample> rows) {
    if (rows.empty()) return {};
    const auto p = static_cast<Eigen::Index>(rows.front().x.size());
    const auto m = static_cast<Eigen::Index>(rows.size());
    Vector y(m);
    Eigen::VectorXi z(m);
    RowMatrix x(m, p);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(r.x.size()) != p) {
        throw invalid_argument("observational row " + std::to_string(i) +
                               " has inconsistent covariate dimension");
      }
      y(i) = r.y;
      z(i) = r.z;
      for (Eigen::Index j = 0; j < p; ++j) x(i, j) = r.x[static_cast<std::size_t>(j)];
    }
    return ObservationalData(std::move(y), std::move(z), std::move(x));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(y_.size()); }
  Eigen::Index dim() const noexcept { return x_.cols(); }
  bool empty() const noexcept { return y_.size() == 0; }

  const Vector& y() const noexcept { return y_; }
  const Eigen::VectorXi& z() const noexcept { return z_; }
  const RowMatrix& x() const noexcept { return x_; }
  Covariate x(std::size_t i) const noexcept { return row_of(x_, static_cast<Eigen::Index>(i)); }

  ObservationalSample row(std::size_t i) const {
    const auto c = x(i);
    const auto k = static_cast<Eigen::Index>(i);
    return {y_(k), z_(k), {c.begin(), c.end()}};
  }

  /// Rows at `indices`, in that order.
  ObservationalData subset(std::span<const std::size_t> indices) const {
    const auto m = static_cast<Eigen::Index>(indices.size());
    Vector y(m);
    Eigen::VectorXi z(m);
    RowMatrix x(m, x_.cols());
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
      y(r) = y_(i);
      z(r) = z_(i);
      x.row(r) = x_.row(i);
    }
    ObservationalData out;
    out.y_ = std::move(y);
    out.z_ = std::move(z);
    out.x_ = std::move(x);
    return out;
  }

 private:
  void validate() const {
    if (y_.size() != z_.size() || y_.size() != x_.rows()) {
      throw invalid_argument("observational data: y/z/x length mismatch");
    }
    if (y_.size() > 0 && x_.cols() < 1) throw invalid_argument("observational data: p_x must be >= 1");
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      if (!std::isfinite(y_(i))) {
        throw invalid_argument("observational data: non-finite y in row " + std::to_string(i));
      }
      if (z_(i) != 0 && z_(i) != 1) {
        throw invalid_argument("observational data: z must be 0 or 1 (row " + std::to_string(i) + ")");
      }
      detail::check_finite_row(x_.data() + i * x_.cols(), x_.cols(), "observational data",
                               static_cast<std::size_t>(i));
    }
  }

  Vector y_;
  Eigen::VectorXi z_;
  RowMatrix x_;
};

inline void require_same_dimension(const ExperimentalData& exp, const ObservationalData& obs) {
  if (!exp.empty() && !obs.empty() && exp.dim() != obs.dim()) {
    throw invalid_argument("covariate dimension mismatch: experimental p_x=" +
                           std::to_string(exp.dim()) + ", observational p_x=" +
                           std::to_string(obs.dim()));
  }
}

/// Converts an unpaired experimental arm observation into an effect
/// measurement via inverse-propensity weighting with the known propensity e.
inline double convert_unpaired(double y, int z, double e) {
  if (!(e > 0.0 && e < 1.0)) throw invalid_argument("convert_unpaired: e must lie in (0, 1)");
  if (z != 0 && z != 1) throw invalid_argument("convert_unpaired: z must be 0 or 1");
  return z == 1 ? y / e : -y / (1.0 - e);
}

}  // namespace tcal
