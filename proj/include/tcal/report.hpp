#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <variant>

#include <json.hpp>

#include "tcal/core/error.hpp"
#include "tcal/core/normal.hpp"

namespace tcal {

using DiagnosticValue = std::variant<double, std::string>;

/// Point estimate, variance and Wald interval from one estimator.
struct EstimateReport {
  std::string estimator;  // tau_bar | aipsw | collab
  double point = 0.0;
  double variance = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  std::size_t n = 0;
  std::size_t n_obs = 0;
  int k_folds = 0;
  std::map<std::string, DiagnosticValue> diagnostics;

  double diagnostic(const std::string& key) const {
    const auto it = diagnostics.find(key);
    if (it == diagnostics.end()) throw invalid_argument("no diagnostic '" + key + "'");
    return std::get<double>(it->second);
  }
};

/// point -/+ z_{1 - alpha/2} sqrt(variance).
inline std::pair<double, double> confidence_interval(double point, double variance, double alpha) {
  if (!(variance >= 0.0)) throw invalid_argument("confidence_interval: variance must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_argument("confidence_interval: alpha must lie in (0, 1)");
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
  return {point - half, point + half};
}

inline void fill_interval(EstimateReport& r) {
  const auto [lo, hi] = confidence_interval(r.point, r.variance, r.alpha);
  r.ci_lower = lo;
  r.ci_upper = hi;
}

inline nlohmann::ordered_json to_json(const EstimateReport& r) {
  nlohmann::ordered_json diag = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.diagnostics) {
    if (const auto* d = std::get_if<double>(&v)) {
      diag[k] = std::isfinite(*d) ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
    } else {
      diag[k] = std::get<std::string>(v);
    }
  }
  nlohmann::ordered_json j;
  j["estimator"] = r.estimator;
  j["point"] = r.point;
  j["variance"] = r.variance;
  j["ci"] = {r.ci_lower, r.ci_upper};
  j["alpha"] = r.alpha;
  j["n"] = r.n;
  j["n_obs"] = r.n_obs;
  j["k_folds"] = r.k_folds;
  j["diagnostics"] = std::move(diag);
  return j;
}

}  // namespace tcal
