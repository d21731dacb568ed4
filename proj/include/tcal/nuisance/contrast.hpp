#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/core/folds.hpp"
#include "tcal/dgp_spec.hpp"
#include "tcal/linalg.hpp"
#include "tcal/nuisance/smoother.hpp"

namespace tcal {

/// A fitted function of the covariates.
class CovariateModel {
 public:
  virtual ~CovariateModel() = default;
  virtual double predict(Covariate x) const = 0;

  Vector predict_rows(const RowMatrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(row_of(x, i));
    return out;
  }
};

enum class ContrastLearnerKind { oracle, kernel_t, knn_t, ridge_poly };

/// Named as `oracle | kernel_t | knn_t | ridge_poly<d>` in configs.
struct ContrastLearnerSpec {
  ContrastLearnerKind kind = ContrastLearnerKind::oracle;
  int degree = 1;  // ridge_poly only
  /// Required by the oracle learner.
  std::optional<DgpSpec> dgp;

  static ContrastLearnerSpec parse(const std::string& name) {
    ContrastLearnerSpec s;
    if (name == "oracle") {
      s.kind = ContrastLearnerKind::oracle;
    } else if (name == "kernel_t") {
      s.kind = ContrastLearnerKind::kernel_t;
    } else if (name == "knn_t") {
      s.kind = ContrastLearnerKind::knn_t;
    } else if (name.rfind("ridge_poly", 0) == 0 && name.size() == 11 && name[10] >= '1' &&
               name[10] <= '9') {
      s.kind = ContrastLearnerKind::ridge_poly;
      s.degree = name[10] - '0';
    } else {
      throw Error(ErrorKind::config, "unknown contrast learner '" + name +
                                         "' (expected oracle, kernel_t, knn_t or ridge_poly<d>)");
    }
    return s;
  }

  std::string tag() const {
    switch (kind) {
      case ContrastLearnerKind::oracle: return "oracle";
      case ContrastLearnerKind::kernel_t: return "kernel_t";
      case ContrastLearnerKind::knn_t: return "knn_t";
      case ContrastLearnerKind::ridge_poly: return "ridge_poly" + std::to_string(degree);
    }
    return "unknown";
  }
};

namespace detail {

class OracleContrast final : public CovariateModel {
 public:
  explicit OracleContrast(DgpSpec::Fn delta) : delta_(std::move(delta)) {}
  double predict(Covariate x) const override { return delta_(x); }

 private:
  DgpSpec::Fn delta_;
};

class KernelTContrast final : public CovariateModel {
 public:
  KernelTContrast(SmootherFit treated, SmootherFit control)
      : treated_(std::move(treated)), control_(std::move(control)) {}
  double predict(Covariate x) const override {
    return treated_.predict(x[0]) - control_.predict(x[0]);
  }

 private:
  SmootherFit treated_;
  SmootherFit control_;
};

/// k-nearest-neighbour mean of one arm, brute force.
class KnnArm {
 public:
  KnnArm(RowMatrix x, Vector y)
      : x_(std::move(x)), y_(std::move(y)),
        k_(static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(y_.size()), 0.4)))) {
    k_ = std::clamp<std::size_t>(k_, 1, static_cast<std::size_t>(y_.size()));
  }

  std::size_t k() const noexcept { return k_; }

  double predict(Covariate x) const {
    const auto m = static_cast<std::size_t>(y_.size());
    std::vector<std::pair<double, std::size_t>> dist(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = x_.data() + static_cast<Eigen::Index>(i) * x_.cols();
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += (row[j] - x[j]) * (row[j] - x[j]);
      dist[i] = {s, i};
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_ - 1), dist.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k_; ++i) sum += y_(static_cast<Eigen::Index>(dist[i].second));
    return sum / static_cast<double>(k_);
  }

 private:
  RowMatrix x_;
  Vector y_;
  std::size_t k_;
};

class KnnTContrast final : public CovariateModel {
 public:
  KnnTContrast(KnnArm treated, KnnArm control)
      : treated_(std::move(treated)), control_(std::move(control)) {}
  double predict(Covariate x) const override { return treated_.predict(x) - control_.predict(x); }

 private:
  KnnArm treated_;
  KnnArm control_;
};

/// Coordinate-wise powers x_j, x_j^2, ..., x_j^degree.
inline RowMatrix poly_features(const RowMatrix& x, int degree) {
  RowMatrix out(x.rows(), x.cols() * degree);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double v = 1.0;
      for (int d = 0; d < degree; ++d) {
        v *= x(i, j);
        out(i, j * degree + d) = v;
      }
    }
  }
  return out;
}

class RidgePolyContrast final : public CovariateModel {
 public:
  RidgePolyContrast(linalg::RidgeFit treated, linalg::RidgeFit control, int degree)
      : treated_(std::move(treated)), control_(std::move(control)), degree_(degree) {}

  double predict(Covariate x) const override {
    std::vector<double> f(x.size() * static_cast<std::size_t>(degree_));
    for (std::size_t j = 0; j < x.size(); ++j) {
      double v = 1.0;
      for (int d = 0; d < degree_; ++d) {
        v *= x[j];
        f[j * static_cast<std::size_t>(degree_) + static_cast<std::size_t>(d)] = v;
      }
    }
    return treated_.predict(f.data()) - control_.predict(f.data());
  }

 private:
  linalg::RidgeFit treated_;
  linalg::RidgeFit control_;
  int degree_;
};

inline std::shared_ptr<const CovariateModel> train_contrast(const ObservationalData& train,
                                                            const ContrastLearnerSpec& spec) {
  std::vector<std::size_t> t_rows, c_rows;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (train.z()(static_cast<Eigen::Index>(i)) == 1 ? t_rows : c_rows).push_back(i);
  }
  const ObservationalData treated = train.subset(t_rows);
  const ObservationalData control = train.subset(c_rows);
  switch (spec.kind) {
    case ContrastLearnerKind::oracle:
      return std::make_shared<OracleContrast>(spec.dgp->delta);
    case ContrastLearnerKind::kernel_t: {
      if (train.dim() != 1) {
        throw invalid_argument("kernel_t contrast learner requires univariate covariates (p_x=" +
                               std::to_string(train.dim()) + ")");
      }
      auto span_of = [](const auto& v) {
        return std::span<const double>(v.data(), static_cast<std::size_t>(v.size()));
      };
      const Vector xt = treated.x().col(0);
      const Vector xc = control.x().col(0);
      return std::make_shared<KernelTContrast>(fit_smoother(span_of(xt), span_of(treated.y())),
                                               fit_smoother(span_of(xc), span_of(control.y())));
    }
    case ContrastLearnerKind::knn_t:
      return std::make_shared<KnnTContrast>(KnnArm(treated.x(), treated.y()),
                                            KnnArm(control.x(), control.y()));
    case ContrastLearnerKind::ridge_poly: {
      auto ft = linalg::ridge_fit(poly_features(treated.x(), spec.degree), treated.y());
      auto fc = linalg::ridge_fit(poly_features(control.x(), spec.degree), control.y());
      return std::make_shared<RidgePolyContrast>(std::move(ft), std::move(fc), spec.degree);
    }
  }
  throw invalid_argument("unknown contrast learner");
}

}  // namespace detail

/// Cross-fit contrast estimates: one model per fold, each trained without
/// that fold's rows, and their average.
class ContrastFit {
 public:
  ContrastFit() = default;
  ContrastFit(std::vector<std::shared_ptr<const CovariateModel>> per_fold,
              std::vector<std::vector<std::size_t>> training_rows, std::string learner_tag)
      : per_fold_(std::move(per_fold)),
        training_rows_(std::move(training_rows)),
        learner_tag_(std::move(learner_tag)) {}

  int k() const noexcept { return static_cast<int>(per_fold_.size()); }
  const std::string& learner_tag() const noexcept { return learner_tag_; }

  /// Observational row indices the fold-`fold` model was trained on.
  const std::vector<std::size_t>& training_rows(int fold) const {
    return training_rows_.at(static_cast<std::size_t>(fold));
  }

  double fold_predict(int fold, Covariate x) const {
    return per_fold_.at(static_cast<std::size_t>(fold))->predict(x);
  }

  double averaged(Covariate x) const {
    double s = 0.0;
    for (const auto& m : per_fold_) s += m->predict(x);
    return s / static_cast<double>(per_fold_.size());
  }

  Vector averaged(const RowMatrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = averaged(row_of(x, i));
    return out;
  }

  /// Delta-hat^{(-k(i))}(X_i) for every observational row i.
  Vector out_of_fold(const ObservationalData& obs, const FoldAssignment& folds) const {
    if (folds.size() != obs.size() || folds.k() != k()) {
      throw invalid_argument("contrast fit and fold assignment refer to different data (folds N=" +
                             std::to_string(folds.size()) + ", K=" + std::to_string(folds.k()) +
                             "; data N=" + std::to_string(obs.size()) + ", contrast K=" +
                             std::to_string(k()) + ")");
    }
    Vector out(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
      out(static_cast<Eigen::Index>(i)) = fold_predict(folds.fold_of(i), obs.x(i));
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<const CovariateModel>> per_fold_;
  std::vector<std::vector<std::size_t>> training_rows_;
  std::string learner_tag_;
};

/// Trains the contrast learner on the complement of each fold.
inline ContrastFit fit_contrast_crossfit(const ObservationalData& obs, const FoldAssignment& folds,
                                         const ContrastLearnerSpec& spec) {
  if (folds.size() != obs.size()) {
    throw invalid_argument("fold assignment covers " + std::to_string(folds.size()) +
                           " rows but the observational data has " + std::to_string(obs.size()));
  }
  if (spec.kind == ContrastLearnerKind::oracle && (!spec.dgp || !spec.dgp->delta)) {
    throw Error(ErrorKind::config, "oracle contrast learner needs a known data-generating process");
  }
  std::vector<std::shared_ptr<const CovariateModel>> models;
  std::vector<std::vector<std::size_t>> rows;
  for (int f = 0; f < folds.k(); ++f) {
    auto train_idx = folds.training_rows(f);
    const ObservationalData train = obs.subset(train_idx);
    if (spec.kind != ContrastLearnerKind::oracle) {
      const int treated = train.z().sum();
      const int control = static_cast<int>(train.size()) - treated;
      if (treated < 2 || control < 2) {
        throw Error(ErrorKind::degenerate_arm,
                    "training rows for fold " + std::to_string(f + 1) + " have " +
                        std::to_string(treated) + " treated and " + std::to_string(control) +
                        " control rows; each arm needs at least 2");
      }
    }
    models.push_back(spec.kind == ContrastLearnerKind::oracle && !models.empty()
                         ? models.front()
                         : detail::train_contrast(train, spec));
    rows.push_back(std::move(train_idx));
  }
  return ContrastFit(std::move(models), std::move(rows), spec.tag());
}

}  // namespace tcal
