#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/nuisance/cate.hpp"
#include "tcal/nuisance/contrast.hpp"
#include "tcal/nuisance/odds.hpp"
#include "tcal/nuisance/smoother.hpp"
#include "tcal/report.hpp"

namespace tcal {

/// Nuisance values evaluated on both samples. Experimental-row vectors have
/// length n, observational ones length N.
struct BaselineTables {
  Vector d;       // experimental D
  Vector mu_exp;  // mu-hat on experimental rows
  Vector q_exp;   // covariate odds q-hat
  Vector g_exp;   // collaborative odds g-hat
  Vector k_exp;   // k-hat
  Vector mu_obs;
  Vector q_obs;
  Vector k_obs;
};

namespace detail {

inline void check_lengths(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) throw invalid_argument(std::string(what) + ": table lengths differ");
}

}  // namespace detail

/// N^-1 sum_exp (D - mu) q + N^-1 sum_obs mu.
inline double aipsw_point(const Vector& d, const Vector& mu_exp, const Vector& q_exp,
                          const Vector& mu_obs) {
  detail::check_lengths(d, mu_exp, "aipsw");
  detail::check_lengths(d, q_exp, "aipsw");
  if (d.size() == 0 || mu_obs.size() == 0) throw invalid_argument("aipsw: empty sample");
  const double nn = static_cast<double>(mu_obs.size());
  return ((d - mu_exp).cwiseProduct(q_exp).sum() + mu_obs.sum()) / nn;
}

inline double aipsw_variance(const Vector& d, const Vector& mu_exp, const Vector& q_exp,
                             const Vector& mu_obs, double point) {
  const double nn = static_cast<double>(mu_obs.size());
  const double exp_part = (q_exp.array().square() * (d - mu_exp).array().square()).sum();
  const double obs_part = (mu_obs.array() - point).square().sum();
  return (exp_part + obs_part) / (nn * nn);
}

/// Experimental summand (D - mu) g + q/(1+q) (mu - k).
inline Vector collab_exp_terms(const BaselineTables& t) {
  return (t.d - t.mu_exp).cwiseProduct(t.g_exp).array() +
         (t.q_exp.array() / (1.0 + t.q_exp.array())) * (t.mu_exp - t.k_exp).array();
}

/// Observational summand (q mu + k)/(1+q).
inline Vector collab_obs_terms(const BaselineTables& t) {
  return (t.q_obs.array() * t.mu_obs.array() + t.k_obs.array()) / (1.0 + t.q_obs.array());
}

inline double collab_point(const BaselineTables& t) {
  detail::check_lengths(t.d, t.mu_exp, "collab");
  detail::check_lengths(t.d, t.g_exp, "collab");
  detail::check_lengths(t.d, t.q_exp, "collab");
  detail::check_lengths(t.d, t.k_exp, "collab");
  detail::check_lengths(t.mu_obs, t.q_obs, "collab");
  detail::check_lengths(t.mu_obs, t.k_obs, "collab");
  if (t.d.size() == 0 || t.mu_obs.size() == 0) throw invalid_argument("collab: empty sample");
  const double nn = static_cast<double>(t.mu_obs.size());
  return (collab_exp_terms(t).sum() + collab_obs_terms(t).sum()) / nn;
}

inline double collab_variance(const BaselineTables& t, double point) {
  const double nn = static_cast<double>(t.mu_obs.size());
  const double exp_part = collab_exp_terms(t).squaredNorm();
  const double obs_part = (collab_obs_terms(t).array() - point).square().sum();
  return (exp_part + obs_part) / (nn * nn);
}

struct BaselineConfig {
  /// Feature degree for the covariate odds model q-hat (1 linear, 2 adds products).
  int q_degree = 1;
  /// Feature degree for g-hat on the scalar mu-hat.
  int g_degree = 1;
  OddsOptions odds{};
  CateOptions cate{};
  double alpha = 0.05;
};

/// mu-hat, q-hat, g-hat and k-hat plus their values on both samples.
struct BaselineInputs {
  CateFit mu_hat;
  OddsFit q_hat;
  OddsFit g_hat;
  SmootherFit k_hat;
  BaselineTables tables;
  double alpha = 0.05;
};

namespace detail {

inline RowMatrix scalar_column(const Vector& v) {
  RowMatrix m(v.size(), 1);
  m.col(0) = v;
  return m;
}

}  // namespace detail

/// mu-hat via fit_cate; q-hat by logistic regression on x; g-hat by logistic
/// regression on mu-hat; k-hat smooths mu-hat against log g-hat over the
/// combined sample (log is monotone, so the conditioning is unchanged).
inline BaselineInputs build_baseline_inputs(const ExperimentalData& exp,
                                            const ObservationalData& obs,
                                            const ContrastFit& contrast,
                                            const BaselineConfig& cfg = {}) {
  require_same_dimension(exp, obs);
  BaselineInputs in;
  in.alpha = cfg.alpha;
  in.mu_hat = with_stage("fit_cate", [&] { return fit_cate(exp, contrast, cfg.cate); });
  BaselineTables& t = in.tables;
  t.d = exp.d();
  t.mu_exp = in.mu_hat.exp_predictions();
  t.mu_obs = in.mu_hat.predict(obs.x());

  const auto n = static_cast<Eigen::Index>(exp.size());
  const auto nn = static_cast<Eigen::Index>(obs.size());
  std::vector<int> label(static_cast<std::size_t>(n + nn), 0);
  std::fill(label.begin(), label.begin() + n, 1);

  in.q_hat = with_stage("fit_odds_q", [&] {
    const RowMatrix fe = odds_features(exp.x(), cfg.q_degree);
    const RowMatrix fo = odds_features(obs.x(), cfg.q_degree);
    RowMatrix all(n + nn, fe.cols());
    all.topRows(n) = fe;
    all.bottomRows(nn) = fo;
    OddsFit f = fit_odds(all, label, cfg.odds);
    t.q_exp = f.odds(fe);
    t.q_obs = f.odds(fo);
    return f;
  });

  Vector g_obs;
  in.g_hat = with_stage("fit_odds_g", [&] {
    const RowMatrix fe = odds_features(detail::scalar_column(t.mu_exp), cfg.g_degree);
    const RowMatrix fo = odds_features(detail::scalar_column(t.mu_obs), cfg.g_degree);
    RowMatrix all(n + nn, fe.cols());
    all.topRows(n) = fe;
    all.bottomRows(nn) = fo;
    OddsFit f = fit_odds(all, label, cfg.odds);
    t.g_exp = f.odds(fe);
    g_obs = f.odds(fo);
    return f;
  });

  in.k_hat = with_stage("fit_smoother_k", [&] {
    std::vector<double> u, v;
    u.reserve(static_cast<std::size_t>(n + nn));
    v.reserve(static_cast<std::size_t>(n + nn));
    for (Eigen::Index i = 0; i < n; ++i) {
      u.push_back(std::log(t.g_exp(i)));
      v.push_back(t.mu_exp(i));
    }
    for (Eigen::Index i = 0; i < nn; ++i) {
      u.push_back(std::log(g_obs(i)));
      v.push_back(t.mu_obs(i));
    }
    SmootherFit s = fit_smoother(u, v);
    t.k_exp = Vector(n);
    t.k_obs = Vector(nn);
    for (Eigen::Index i = 0; i < n; ++i) t.k_exp(i) = s.predict(u[static_cast<std::size_t>(i)]);
    for (Eigen::Index i = 0; i < nn; ++i) t.k_obs(i) = s.predict(u[static_cast<std::size_t>(n + i)]);
    return s;
  });
  return in;
}

namespace detail {

inline void baseline_diagnostics(EstimateReport& r, const BaselineInputs& in) {
  r.diagnostics["max_odds"] = in.tables.q_exp.size() ? in.tables.q_exp.maxCoeff() : 0.0;
  r.diagnostics["clip_count"] =
      static_cast<double>(in.q_hat.clip_count() + in.g_hat.clip_count());
  r.diagnostics["separation_flag"] =
      (in.q_hat.separation() || in.g_hat.separation()) ? 1.0 : 0.0;
  r.diagnostics["odds_converged"] = (in.q_hat.converged() && in.g_hat.converged()) ? 1.0 : 0.0;
  r.diagnostics["mu_hat_exp_predictions"] =
      std::string(in.mu_hat.folds_exp() > 1 ? "cross_fit" : "in_sample");
}

}  // namespace detail

inline EstimateReport aipsw_report(const BaselineTables& t, double alpha) {
  EstimateReport r;
  r.estimator = "aipsw";
  r.point = aipsw_point(t.d, t.mu_exp, t.q_exp, t.mu_obs);
  r.variance = aipsw_variance(t.d, t.mu_exp, t.q_exp, t.mu_obs, r.point);
  r.alpha = alpha;
  r.n = static_cast<std::size_t>(t.d.size());
  r.n_obs = static_cast<std::size_t>(t.mu_obs.size());
  fill_interval(r);
  return r;
}

inline EstimateReport collab_report(const BaselineTables& t, double alpha) {
  EstimateReport r;
  r.estimator = "collab";
  r.point = collab_point(t);
  r.variance = collab_variance(t, r.point);
  r.alpha = alpha;
  r.n = static_cast<std::size_t>(t.d.size());
  r.n_obs = static_cast<std::size_t>(t.mu_obs.size());
  fill_interval(r);
  return r;
}

inline EstimateReport estimate_aipsw(const BaselineInputs& in) {
  EstimateReport r = with_stage("aipsw", [&] { return aipsw_report(in.tables, in.alpha); });
  detail::baseline_diagnostics(r, in);
  return r;
}

inline EstimateReport estimate_collab(const BaselineInputs& in) {
  EstimateReport r = with_stage("collab", [&] { return collab_report(in.tables, in.alpha); });
  detail::baseline_diagnostics(r, in);
  return r;
}

}  // namespace tcal
