#pragma once

#include <optional>
#include <string>

#include "tcal/core/data.hpp"
#include "tcal/core/folds.hpp"
#include "tcal/core/rng.hpp"
#include "tcal/linalg.hpp"
#include "tcal/nuisance/contrast.hpp"

namespace tcal {

struct CateOptions {
  /// Cross-fitting folds for the in-sample experimental predictions; 1 means
  /// in-sample fitted values.
  int folds_exp = 5;
  /// Fixed ridge penalty (standardized scale); GCV when unset.
  std::optional<double> penalty;
  std::uint64_t seed = 0;
};

/// Ridge regression of D on (x, Delta-hat(x)).
class CateFit {
 public:
  CateFit() = default;
  CateFit(ContrastFit contrast, linalg::RidgeFit full, Vector exp_predictions, int folds_exp)
      : contrast_(std::move(contrast)),
        full_(std::move(full)),
        exp_predictions_(std::move(exp_predictions)),
        folds_exp_(folds_exp) {}

  std::string learner_tag() const { return "ridge_gcv(x,delta)"; }
  int folds_exp() const noexcept { return folds_exp_; }
  double penalty() const noexcept { return full_.penalty; }
  const linalg::RidgeFit& model() const noexcept { return full_; }

  double predict(Covariate x) const {
    std::vector<double> f(x.begin(), x.end());
    f.push_back(contrast_.averaged(x));
    return full_.predict(f.data());
  }

  Vector predict(const RowMatrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(row_of(x, i));
    return out;
  }

  /// Predictions on the experimental training rows (cross-fit when
  /// folds_exp > 1).
  const Vector& exp_predictions() const noexcept { return exp_predictions_; }

 private:
  ContrastFit contrast_;
  linalg::RidgeFit full_;
  Vector exp_predictions_;
  int folds_exp_ = 1;
};

/// Feature matrix [x, Delta-hat(x)].
inline RowMatrix cate_features(const RowMatrix& x, const ContrastFit& contrast) {
  RowMatrix f(x.rows(), x.cols() + 1);
  f.leftCols(x.cols()) = x;
  f.col(x.cols()) = contrast.averaged(x);
  return f;
}

inline CateFit fit_cate(const ExperimentalData& exp, const ContrastFit& contrast,
                        const CateOptions& opts = {}) {
  if (exp.empty()) throw invalid_argument("fit_cate: experimental data is empty");
  if (opts.folds_exp < 1) throw invalid_argument("fit_cate: folds_exp must be >= 1");
  linalg::RidgeOptions ropts;
  ropts.penalty = opts.penalty;
  const RowMatrix f = cate_features(exp.x(), contrast);
  linalg::RidgeFit full = linalg::ridge_fit(f, exp.d(), ropts);

  const auto n = exp.size();
  Vector preds(static_cast<Eigen::Index>(n));
  const int kf = std::min<int>(opts.folds_exp, static_cast<int>(n));
  if (kf <= 1) {
    preds = full.predict(f);
  } else {
    RngStream rng(opts.seed, 0x43415445ULL);  // "CATE"
    const FoldAssignment folds = partition_folds(n, kf, rng);
    for (int k = 0; k < kf; ++k) {
      const auto train = folds.training_rows(k);
      const auto& held = folds.members(k);
      RowMatrix ft(static_cast<Eigen::Index>(train.size()), f.cols());
      Vector dt(static_cast<Eigen::Index>(train.size()));
      for (std::size_t r = 0; r < train.size(); ++r) {
        ft.row(static_cast<Eigen::Index>(r)) = f.row(static_cast<Eigen::Index>(train[r]));
        dt(static_cast<Eigen::Index>(r)) = exp.d()(static_cast<Eigen::Index>(train[r]));
      }
      const linalg::RidgeFit part = linalg::ridge_fit(ft, dt, ropts);
      for (std::size_t i : held) {
        const auto ii = static_cast<Eigen::Index>(i);
        preds(ii) = part.predict(f.data() + ii * f.cols());
      }
    }
  }
  return CateFit(contrast, std::move(full), std::move(preds), kf);
}

}  // namespace tcal
