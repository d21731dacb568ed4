#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tcal/baselines.hpp"
#include "tcal/calibrate.hpp"
#include "tcal/core/csv.hpp"
#include "tcal/dgp.hpp"
#include "tcal/oracle.hpp"
#include "tcal/report.hpp"

namespace tcal {

/// Which population quantity an estimator is scored against.
enum class EstimandKind { tau_bar, tau };

/// A user-supplied estimator run once per replication.
struct CustomEstimator {
  std::string name;
  EstimandKind target = EstimandKind::tau;
  std::function<EstimateReport(const SimulatedPair&, RngStream&)> run;
};

struct ScenarioConfig {
  std::string id = "0";
  std::uint64_t scenario_index = 0;
  DgpFamily family = DgpFamily::univariate_kallus;
  double theta = 0.0;
  double eta = 0.0;
  double sigma0_sq = 1.0;
  int dim = 10;
  std::size_t n = 100;
  std::size_t n_obs = 10000;
  std::size_t reps = 100;
  std::vector<std::string> estimators{"tau_bar", "aipsw", "collab"};
  std::string contrast_learner = "oracle";
  int k_folds = 5;
  std::string basis = "poly1";
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// q-hat feature degree; unset means 2 for univariate covariates, else 1.
  std::optional<int> q_degree;
  int g_degree = 1;
  double clip = 1e-6;
  int folds_exp = 5;
  /// Extra estimators, scored like the built-in ones.
  std::vector<CustomEstimator> custom;

  DgpSpec dgp() const {
    switch (family) {
      case DgpFamily::univariate_kallus: return DgpSpec::univariate(theta);
      case DgpFamily::multivariate: return DgpSpec::multivariate(eta, sigma0_sq, dim);
      case DgpFamily::custom: break;
    }
    throw Error(ErrorKind::config, "harness scenarios need a univariate or multivariate family");
  }

  void validate() const {
    if (reps < 1) throw Error(ErrorKind::config, "reps must be >= 1");
    if (n < 1 || n_obs < 1) throw Error(ErrorKind::config, "n and n_obs must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::config, "alpha must lie in (0, 1)");
    if (k_folds < 1) throw Error(ErrorKind::config, "k_folds must be >= 1");
    for (const auto& e : estimators) {
      if (e != "tau_bar" && e != "aipsw" && e != "collab") {
        throw Error(ErrorKind::config, "unknown estimator '" + e + "' (expected tau_bar, aipsw, collab)");
      }
    }
    ContrastLearnerSpec::parse(contrast_learner);
    try {
      BasisExpansion::parse(basis);
      (void)dgp();
    } catch (const Error& e) {
      throw Error(ErrorKind::config, e.what());
    }
  }
};

inline nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  j["id"] = c.id;
  j["family"] = to_string(c.family);
  if (c.family == DgpFamily::univariate_kallus) {
    j["theta"] = c.theta;
  } else {
    j["eta"] = c.eta;
    j["sigma0_sq"] = c.sigma0_sq;
    j["dim"] = c.dim;
  }
  j["n"] = c.n;
  j["n_obs"] = c.n_obs;
  j["reps"] = c.reps;
  j["estimators"] = c.estimators;
  j["contrast_learner"] = c.contrast_learner;
  j["k_folds"] = c.k_folds;
  j["basis"] = c.basis;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  if (c.q_degree) j["q_degree"] = *c.q_degree;
  j["g_degree"] = c.g_degree;
  j["clip"] = c.clip;
  j["folds_exp"] = c.folds_exp;
  return j;
}

/// One estimator on one replication.
struct RepRow {
  std::size_t rep = 0;
  std::string estimator;
  double point = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  bool covered = false;
  bool failed = false;
  std::string error;
};

struct EstimatorSummary {
  std::string estimator;
  std::string target_name;  // tau_bar | tau
  double target = 0.0;
  std::size_t count = 0;     // successful replications
  std::size_t failures = 0;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;  // population variance of the point estimates
  double mse = 0.0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double mean_variance_estimate = 0.0;
};

struct ScenarioResult {
  ScenarioConfig config;
  OracleEstimands estimands;
  std::vector<EstimatorSummary> summaries;
  std::vector<RepRow> rows;  // ordered by (rep, estimator)
  bool unreliable = false;

  const EstimatorSummary& summary(const std::string& estimator) const {
    for (const auto& s : summaries) {
      if (s.estimator == estimator) return s;
    }
    throw invalid_argument("no summary for estimator '" + estimator + "'");
  }
};

namespace detail {

inline RepRow row_from_report(std::size_t rep, const std::string& name, const EstimateReport& r,
                              double target) {
  RepRow row;
  row.rep = rep;
  row.estimator = name;
  row.point = r.point;
  row.variance = r.variance;
  row.ci_lo = r.ci_lower;
  row.ci_hi = r.ci_upper;
  row.covered = r.ci_lower <= target && target <= r.ci_upper;
  if (!std::isfinite(r.point) || !std::isfinite(r.variance)) {
    row.failed = true;
    row.covered = false;
    row.error = "non-finite estimate";
  }
  return row;
}

inline RepRow failed_row(std::size_t rep, const std::string& name, const std::string& msg) {
  RepRow row;
  row.rep = rep;
  row.estimator = name;
  row.failed = true;
  row.error = msg;
  return row;
}

template <class Fn>
RepRow guarded(std::size_t rep, const std::string& name, double target, Fn&& fn) {
  try {
    return row_from_report(rep, name, fn(), target);
  } catch (const Error& e) {
    return failed_row(rep, name, e.describe());
  } catch (const std::exception& e) {
    return failed_row(rep, name, e.what());
  }
}

inline std::vector<RepRow> run_replication(const ScenarioConfig& cfg, const DgpSpec& dgp,
                                           const OracleEstimands& est, std::size_t rep) {
  const std::uint64_t stream = (cfg.scenario_index << 32) | static_cast<std::uint64_t>(rep);
  RngStream rep_rng(cfg.seed, stream);
  RngStream data_rng = rep_rng.substream(100);
  const SimulatedPair pair = sample_dgp(dgp, cfg.n, cfg.n_obs, data_rng);

  TauBarConfig tb;
  tb.k_folds = cfg.k_folds;
  tb.psi = BasisExpansion::parse(cfg.basis);
  tb.learner = ContrastLearnerSpec::parse(cfg.contrast_learner);
  tb.learner.dgp = dgp;
  tb.alpha = cfg.alpha;
  tb.seed = cfg.seed;
  tb.stream = stream;

  std::vector<RepRow> rows;
  std::optional<ContrastFit> contrast;
  const auto wants = [&](const char* e) {
    return std::find(cfg.estimators.begin(), cfg.estimators.end(), e) != cfg.estimators.end();
  };

  for (const auto& name : cfg.estimators) {
    if (name != "tau_bar") continue;
    rows.push_back(guarded(rep, name, est.tau_bar, [&] {
      TauBarRun run = run_tau_bar(pair.exp, pair.obs, tb);
      contrast = run.contrast;
      return run.report;
    }));
  }

  if (wants("aipsw") || wants("collab")) {
    std::optional<BaselineInputs> inputs;
    std::string err;
    try {
      if (!contrast) {
        RngStream frng = RngStream(tb.seed, tb.stream).substream(1);
        const FoldAssignment folds = partition_folds(pair.obs.size(), tb.k_folds, frng);
        contrast = with_stage("fit_contrast_crossfit",
                              [&] { return fit_contrast_crossfit(pair.obs, folds, tb.learner); });
      }
      BaselineConfig bc;
      bc.q_degree = cfg.q_degree.value_or(dgp.dim == 1 ? 2 : 1);
      bc.g_degree = cfg.g_degree;
      bc.odds.clip = cfg.clip;
      bc.cate.folds_exp = cfg.folds_exp;
      bc.cate.seed = rep_rng.substream(3)();
      bc.alpha = cfg.alpha;
      inputs = build_baseline_inputs(pair.exp, pair.obs, *contrast, bc);
    } catch (const Error& e) {
      err = e.describe();
    } catch (const std::exception& e) {
      err = e.what();
    }
    for (const auto& name : cfg.estimators) {
      if (name != "aipsw" && name != "collab") continue;
      if (!inputs) {
        rows.push_back(failed_row(rep, name, err));
        continue;
      }
      rows.push_back(guarded(rep, name, est.tau, [&] {
        return name == "aipsw" ? estimate_aipsw(*inputs) : estimate_collab(*inputs);
      }));
    }
  }

  for (const auto& c : cfg.custom) {
    const double target = c.target == EstimandKind::tau_bar ? est.tau_bar : est.tau;
    RngStream crng = rep_rng.substream(4);
    rows.push_back(guarded(rep, c.name, target, [&] { return c.run(pair, crng); }));
  }

  // Stable order: configured estimators, then custom ones.
  std::vector<RepRow> ordered;
  for (const auto& name : cfg.estimators) {
    for (auto& r : rows) {
      if (r.estimator == name) ordered.push_back(r);
    }
  }
  for (const auto& c : cfg.custom) {
    for (auto& r : rows) {
      if (r.estimator == c.name) ordered.push_back(r);
    }
  }
  return ordered;
}

inline EstimatorSummary summarize(const std::string& name, EstimandKind kind, double target,
                                  const std::vector<RepRow>& rows) {
  EstimatorSummary s;
  s.estimator = name;
  s.target_name = kind == EstimandKind::tau_bar ? "tau_bar" : "tau";
  s.target = target;
  std::vector<const RepRow*> ok;
  for (const auto& r : rows) {
    if (r.estimator != name) continue;
    if (r.failed) {
      ++s.failures;
    } else {
      ok.push_back(&r);
    }
  }
  s.count = ok.size();
  if (ok.empty()) {
    s.mean = s.bias = s.variance = s.mse = s.coverage = s.mean_width =
        std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const double m = static_cast<double>(ok.size());
  double sum = 0.0, cov = 0.0, width = 0.0, vhat = 0.0;
  for (const RepRow* r : ok) {
    sum += r->point;
    cov += r->covered ? 1.0 : 0.0;
    width += r->ci_hi - r->ci_lo;
    vhat += r->variance;
  }
  s.mean = sum / m;
  s.bias = s.mean - target;
  double var = 0.0, sq = 0.0;
  for (const RepRow* r : ok) {
    var += (r->point - s.mean) * (r->point - s.mean);
    sq += (r->point - target) * (r->point - target);
  }
  s.variance = var / m;
  s.mse = sq / m;
  s.coverage = cov / m;
  s.mean_width = width / m;
  s.mean_variance_estimate = vhat / m;
  return s;
}

}  // namespace detail

/// Runs cfg.reps independent replications. Replication r always uses the
/// stream (scenario_index << 32 | r), so results do not depend on thread
/// count or execution order.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const DgpSpec dgp = cfg.dgp();
  ScenarioResult res;
  res.config = cfg;
  res.estimands = oracle_estimands(dgp, BasisExpansion::parse(cfg.basis));

  std::vector<std::vector<RepRow>> per_rep(cfg.reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next.fetch_add(1); r < cfg.reps; r = next.fetch_add(1)) {
      per_rep[r] = detail::run_replication(cfg, dgp, res.estimands, r);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.reps)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& rows : per_rep) {
    for (auto& r : rows) res.rows.push_back(std::move(r));
  }

  std::size_t failures = 0;
  for (const auto& name : cfg.estimators) {
    const auto kind = name == "tau_bar" ? EstimandKind::tau_bar : EstimandKind::tau;
    const double target = kind == EstimandKind::tau_bar ? res.estimands.tau_bar : res.estimands.tau;
    res.summaries.push_back(detail::summarize(name, kind, target, res.rows));
    failures += res.summaries.back().failures;
  }
  for (const auto& c : cfg.custom) {
    const double target = c.target == EstimandKind::tau_bar ? res.estimands.tau_bar : res.estimands.tau;
    res.summaries.push_back(detail::summarize(c.name, c.target, target, res.rows));
    failures += res.summaries.back().failures;
  }
  res.unreliable = !res.rows.empty() &&
                   static_cast<double>(failures) > 0.10 * static_cast<double>(res.rows.size());
  return res;
}

namespace detail {

inline nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const EstimatorSummary& s) {
  using detail::number_or_null;
  nlohmann::ordered_json j;
  j["estimator"] = s.estimator;
  j["target"] = s.target_name;
  j["target_value"] = s.target;
  j["count"] = s.count;
  j["failures"] = s.failures;
  j["mean"] = number_or_null(s.mean);
  j["bias"] = number_or_null(s.bias);
  j["variance"] = number_or_null(s.variance);
  j["mse"] = number_or_null(s.mse);
  j["coverage"] = number_or_null(s.coverage);
  j["mean_width"] = number_or_null(s.mean_width);
  j["mean_variance_estimate"] = number_or_null(s.mean_variance_estimate);
  return j;
}

inline nlohmann::ordered_json summary_json(const ScenarioResult& r) {
  nlohmann::ordered_json j;
  j["scenario"] = r.config.id;
  j["config"] = to_json(r.config);
  nlohmann::ordered_json est;
  est["tau"] = r.estimands.tau;
  est["tau_bar"] = r.estimands.tau_bar;
  est["sigma"] = r.estimands.sigma;
  est["beta_bar"] = std::vector<double>(r.estimands.beta_bar.data(),
                                        r.estimands.beta_bar.data() + r.estimands.beta_bar.size());
  est["alpha_bar"] = std::vector<double>(r.estimands.alpha_bar.data(),
                                         r.estimands.alpha_bar.data() + r.estimands.alpha_bar.size());
  j["estimands"] = std::move(est);
  j["unreliable"] = r.unreliable;
  nlohmann::ordered_json sums = nlohmann::ordered_json::array();
  for (const auto& s : r.summaries) sums.push_back(to_json(s));
  j["estimators"] = std::move(sums);
  return j;
}

/// Columns: rep, estimator, point, variance, ci_lo, ci_hi, covered, failed.
/// The first line is a `# config: {...}` comment.
inline std::string reps_csv(const ScenarioResult& r) {
  std::ostringstream os;
  os << "# config: " << to_json(r.config).dump() << "\n";
  os << "rep,estimator,point,variance,ci_lo,ci_hi,covered,failed\n";
  auto num = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string("nan"); };
  for (const auto& row : r.rows) {
    os << row.rep << ',' << row.estimator << ',' << num(row.point) << ',' << num(row.variance)
       << ',' << num(row.ci_lo) << ',' << num(row.ci_hi) << ',' << (row.covered ? 1 : 0) << ','
       << (row.failed ? 1 : 0) << "\n";
  }
  return os.str();
}

/// Writes scenario_<id>_reps.csv and scenario_<id>_summary.json into `dir`.
inline void write_scenario_outputs(const ScenarioResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = "scenario_" + r.config.id;
  {
    std::ofstream f(dir / (stem + "_reps.csv"));
    if (!f) throw Error(ErrorKind::config, "cannot write " + (dir / (stem + "_reps.csv")).string());
    f << reps_csv(r);
  }
  {
    std::ofstream f(dir / (stem + "_summary.json"));
    if (!f) throw Error(ErrorKind::config, "cannot write " + (dir / (stem + "_summary.json")).string());
    f << summary_json(r).dump(2) << "\n";
  }
}

/// Coverage and mean CI width per (scenario, estimator).
struct CoverageTable {
  std::vector<std::string> scenarios;
  std::vector<std::string> estimators;
  /// coverage[s][e], width[s][e]; NaN where an estimator was not run.
  std::vector<std::vector<double>> coverage;
  std::vector<std::vector<double>> width;

  std::string to_csv() const {
    std::ostringstream os;
    os << "scenario";
    for (const auto& e : estimators) os << ',' << e << "_coverage_pct," << e << "_mean_width";
    os << "\n";
    auto num = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string("nan"); };
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      os << scenarios[s];
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        os << ',' << num(100.0 * coverage[s][e]) << ',' << num(width[s][e]);
      }
      os << "\n";
    }
    return os.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      nlohmann::ordered_json row;
      row["scenario"] = scenarios[s];
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        row[estimators[e]] = {{"coverage_pct", detail::number_or_null(100.0 * coverage[s][e])},
                              {"mean_width", detail::number_or_null(width[s][e])}};
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }
};

inline CoverageTable coverage_table(const std::vector<ScenarioResult>& results) {
  if (results.empty()) throw invalid_argument("coverage_table: no scenarios");
  CoverageTable t;
  for (const auto& r : results) {
    for (const auto& s : r.summaries) {
      if (std::find(t.estimators.begin(), t.estimators.end(), s.estimator) == t.estimators.end()) {
        t.estimators.push_back(s.estimator);
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : results) {
    t.scenarios.push_back(r.config.id);
    std::vector<double> cov(t.estimators.size(), nan), wid(t.estimators.size(), nan);
    for (const auto& s : r.summaries) {
      const auto k = static_cast<std::size_t>(
          std::find(t.estimators.begin(), t.estimators.end(), s.estimator) - t.estimators.begin());
      cov[k] = s.coverage;
      wid[k] = s.mean_width;
    }
    t.coverage.push_back(std::move(cov));
    t.width.push_back(std::move(wid));
  }
  return t;
}

}  // namespace tcal
