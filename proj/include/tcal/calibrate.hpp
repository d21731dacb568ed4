#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "tcal/core/basis.hpp"
#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/core/folds.hpp"
#include "tcal/core/rng.hpp"
#include "tcal/linalg.hpp"
#include "tcal/nuisance/contrast.hpp"
#include "tcal/report.hpp"

namespace tcal {

/// OLS calibration of D on psi(Delta-hat) and the pieces of the plug-in
/// variance.
struct CalibrationFit {
  Vector beta_hat;
  /// n^-1 sum psi psi^T over experimental rows.
  Matrix gram;
  /// Row i is r_i = (D_i - mu_bar_hat(X_i)) psi(Delta-hat(X_i)).
  Matrix residual_vectors;
  /// G^-1 times the observational mean of the out-of-fold psi.
  Vector a_hat;
  /// mu_bar_hat(X_i) on experimental rows.
  Vector fitted;
  double condition_number = 1.0;
  bool used_qr = false;
  double residual_kurtosis = std::numeric_limits<double>::quiet_NaN();
};

/// Table form: D_i, Delta-hat(X_i) on experimental rows and the out-of-fold
/// Delta-hat^{(-k(i))}(X_i) on observational rows.
inline CalibrationFit calibrate_ols(const Vector& d, const Vector& delta_exp,
                                    const Vector& delta_obs_oof, const BasisExpansion& psi) {
  const auto n = d.size();
  const int p = psi.p();
  if (delta_exp.size() != n) throw invalid_argument("calibrate_ols: D and Delta-hat differ in length");
  if (n < p) {
    throw Error(ErrorKind::insufficient_data,
                "calibration needs at least p=" + std::to_string(p) +
                    " experimental rows, got n=" + std::to_string(n));
  }
  if (delta_obs_oof.size() == 0) throw invalid_argument("calibrate_ols: no observational rows");

  const double nd = static_cast<double>(n);
  const Matrix design = psi.design(delta_exp);
  CalibrationFit fit;
  fit.gram = design.transpose() * design / nd;
  const Vector moment = design.transpose() * d / nd;

  Matrix rhs(p, 2);
  rhs.col(0) = moment;
  rhs.col(1) = psi.design(delta_obs_oof).colwise().mean().transpose();
  const linalg::SpdSolution sol = linalg::solve_spd(fit.gram, rhs);
  fit.beta_hat = sol.x.col(0);
  fit.a_hat = sol.x.col(1);
  fit.condition_number = sol.condition_number;
  fit.used_qr = sol.used_qr;

  fit.fitted = design * fit.beta_hat;
  const Vector resid = d - fit.fitted;
  fit.residual_vectors = resid.asDiagonal() * design;

  const double m2 = resid.squaredNorm() / nd;
  const double m4 = resid.array().pow(4).sum() / nd;
  if (m2 > 0.0) fit.residual_kurtosis = m4 / (m2 * m2);
  return fit;
}

inline CalibrationFit calibrate_ols(const ExperimentalData& exp, const ObservationalData& obs,
                                    const FoldAssignment& folds, const ContrastFit& contrast,
                                    const BasisExpansion& psi) {
  if (exp.size() < static_cast<std::size_t>(psi.p())) {
    throw Error(ErrorKind::insufficient_data,
                "calibration needs at least p=" + std::to_string(psi.p()) +
                    " experimental rows, got n=" + std::to_string(exp.size()));
  }
  return calibrate_ols(exp.d(), contrast.averaged(exp.x()), contrast.out_of_fold(obs, folds), psi);
}

/// beta-hat^T psi(Delta-hat^{(-k(i))}(X_i)) for every observational row.
inline Vector out_of_fold_predictions(const Vector& delta_obs_oof, const CalibrationFit& fit,
                                      const BasisExpansion& psi) {
  return psi.design(delta_obs_oof) * fit.beta_hat;
}

inline double estimate_tau_bar(const ObservationalData& obs, const FoldAssignment& folds,
                               const ContrastFit& contrast, const CalibrationFit& fit,
                               const BasisExpansion& psi) {
  if (fit.beta_hat.size() != psi.p()) throw invalid_argument("estimate_tau_bar: basis/fit mismatch");
  return out_of_fold_predictions(contrast.out_of_fold(obs, folds), fit, psi).mean();
}

struct VarianceTerms {
  double calibration = 0.0;  // a^T (n^-2 sum r r^T) a
  double target = 0.0;       // N^-2 sum (pred - tau_bar)^2
  double total() const noexcept { return calibration + target; }
};

inline VarianceTerms variance_terms(const CalibrationFit& fit, const Vector& obs_predictions,
                                    double tau_bar_hat, std::size_t n, std::size_t n_obs) {
  if (static_cast<std::size_t>(obs_predictions.size()) != n_obs) {
    throw invalid_argument("variance_tau_bar: expected " + std::to_string(n_obs) +
                           " observational predictions, got " +
                           std::to_string(obs_predictions.size()));
  }
  if (static_cast<std::size_t>(fit.residual_vectors.rows()) != n) {
    throw invalid_argument("variance_tau_bar: residual count differs from n");
  }
  const double nd = static_cast<double>(n);
  const double nod = static_cast<double>(n_obs);
  VarianceTerms v;
  const Matrix meat = fit.residual_vectors.transpose() * fit.residual_vectors / (nd * nd);
  v.calibration = std::max(0.0, fit.a_hat.dot(meat * fit.a_hat));
  v.target = (obs_predictions.array() - tau_bar_hat).square().sum() / (nod * nod);
  return v;
}

inline double variance_tau_bar(const CalibrationFit& fit, const Vector& obs_predictions,
                               double tau_bar_hat, std::size_t n, std::size_t n_obs) {
  return variance_terms(fit, obs_predictions, tau_bar_hat, n, n_obs).total();
}

struct TauBarConfig {
  int k_folds = 5;
  BasisExpansion psi{};
  ContrastLearnerSpec learner{};
  double alpha = 0.05;
  std::uint64_t seed = 0;
  /// Stream id for the fold partition; the harness binds it to a replication.
  std::uint64_t stream = 0;
};

/// Result of the full pipeline, keeping the intermediate fits.
struct TauBarRun {
  EstimateReport report;
  FoldAssignment folds;
  ContrastFit contrast;
  CalibrationFit calibration;
  Vector obs_predictions;
};

inline TauBarRun run_tau_bar(const ExperimentalData& exp, const ObservationalData& obs,
                             const TauBarConfig& cfg) {
  with_stage("validate_inputs", [&] {
    require_same_dimension(exp, obs);
    if (obs.empty()) throw invalid_argument("observational data is empty");
    if (exp.empty()) {
      throw Error(ErrorKind::insufficient_data, "experimental data is empty");
    }
  });
  TauBarRun run;
  run.folds = with_stage("partition_folds", [&] {
    RngStream rng(cfg.seed, cfg.stream);
    RngStream fold_rng = rng.substream(1);
    return partition_folds(obs.size(), cfg.k_folds, fold_rng);
  });
  run.contrast = with_stage("fit_contrast_crossfit",
                            [&] { return fit_contrast_crossfit(obs, run.folds, cfg.learner); });
  const Vector delta_oof =
      with_stage("fit_contrast_crossfit", [&] { return run.contrast.out_of_fold(obs, run.folds); });
  run.calibration = with_stage("calibrate_ols", [&] {
    if (exp.size() < static_cast<std::size_t>(cfg.psi.p())) {
      throw Error(ErrorKind::insufficient_data,
                  "calibration needs at least p=" + std::to_string(cfg.psi.p()) +
                      " experimental rows, got n=" + std::to_string(exp.size()));
    }
    return calibrate_ols(exp.d(), run.contrast.averaged(exp.x()), delta_oof, cfg.psi);
  });
  run.obs_predictions = with_stage("estimate_tau_bar", [&] {
    return out_of_fold_predictions(delta_oof, run.calibration, cfg.psi);
  });
  EstimateReport& r = run.report;
  r.estimator = "tau_bar";
  r.point = run.obs_predictions.mean();
  const VarianceTerms v = with_stage("variance_tau_bar", [&] {
    return variance_terms(run.calibration, run.obs_predictions, r.point, exp.size(), obs.size());
  });
  r.variance = v.total();
  r.alpha = cfg.alpha;
  r.n = exp.size();
  r.n_obs = obs.size();
  r.k_folds = cfg.k_folds;
  with_stage("confidence_interval", [&] { fill_interval(r); });

  r.diagnostics["gram_condition_number"] = run.calibration.condition_number;
  r.diagnostics["residual_kurtosis"] = run.calibration.residual_kurtosis;
  r.diagnostics["solver"] = std::string(run.calibration.used_qr ? "qr" : "cholesky");
  r.diagnostics["variance_calibration_term"] = v.calibration;
  r.diagnostics["variance_target_term"] = v.target;
  r.diagnostics["contrast_learner"] = run.contrast.learner_tag();
  r.diagnostics["basis"] = cfg.psi.name();
  for (int j = 0; j < cfg.psi.p(); ++j) {
    r.diagnostics["beta_hat_" + std::to_string(j)] = run.calibration.beta_hat(j);
  }
  return run;
}

inline EstimateReport run_tau_bar_pipeline(const ExperimentalData& exp,
                                           const ObservationalData& obs, const TauBarConfig& cfg) {
  return run_tau_bar(exp, obs, cfg).report;
}

}  // namespace tcal
