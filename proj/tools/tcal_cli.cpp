// tcal command-line entry point: estimate, simulate, generate, oracle.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcal/tcal.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Stream ids per subcommand, so one --seed drives every subcommand independently.
constexpr std::uint64_t kStreamEstimate = 1;
constexpr std::uint64_t kStreamGenerate = 2;

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  std::optional<std::string> estimators;
  std::optional<double> alpha;
};

tcal::Error config_error(const std::string& msg) { return tcal::Error(tcal::ErrorKind::config, msg); }

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw config_error("config '" + path + "' must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw tcal::Error(tcal::ErrorKind::parse, "config '" + path + "': " + e.what());
  }
}

void reject_unknown(const json& cfg, const std::set<std::string>& allowed, const std::string& cmd) {
  for (const auto& [k, v] : cfg.items()) {
    if (!allowed.count(k)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw config_error("unknown key '" + k + "' for '" + cmd + "' (allowed: " + list + ")");
    }
  }
}

template <class T>
T get_or(const json& cfg, const std::string& key, T fallback) {
  if (!cfg.contains(key)) return fallback;
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error("config key '" + key + "': " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? std::string{} : item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<std::string> parse_estimators(const std::string& s) {
  auto list = split_list(s, ',');
  for (const auto& e : list) {
    if (e != "tau_bar" && e != "aipsw" && e != "collab") {
      throw config_error("unknown estimator '" + e + "' (expected tau_bar, aipsw, collab)");
    }
  }
  if (list.empty()) throw config_error("no estimators requested");
  return list;
}

/// Applies flag overrides onto the config object, so the effective config
/// is what gets embedded in outputs.
void apply_flags(json& cfg, const GlobalFlags& g) {
  if (g.seed) cfg["seed"] = *g.seed;
  if (g.threads) cfg["threads"] = *g.threads;
  if (g.alpha) cfg["alpha"] = *g.alpha;
  if (g.estimators) cfg["estimators"] = parse_estimators(*g.estimators);
}

std::vector<std::string> estimators_from(const json& cfg) {
  if (!cfg.contains("estimators")) return {"tau_bar", "aipsw", "collab"};
  const auto& e = cfg.at("estimators");
  if (e.is_string()) return parse_estimators(e.get<std::string>());
  std::string joined;
  for (const auto& v : e) joined += (joined.empty() ? "" : ",") + v.get<std::string>();
  return parse_estimators(joined);
}

tcal::DgpSpec dgp_from(const json& cfg) {
  const std::string family = get_or<std::string>(cfg, "family", "univariate");
  if (family == "univariate") return tcal::DgpSpec::univariate(get_or(cfg, "theta", 0.0));
  if (family == "multivariate") {
    return tcal::DgpSpec::multivariate(get_or(cfg, "eta", 0.0), get_or(cfg, "sigma0_sq", 1.0),
                                       get_or(cfg, "dim", 10));
  }
  throw config_error("unknown family '" + family + "' (expected univariate or multivariate)");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw config_error("cannot write '" + path.string() + "'");
  f << text;
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(const GlobalFlags& g, const std::string& exp_path, const std::string& obs_path) {
  json cfg = load_config(g.config_path);
  reject_unknown(cfg,
                 {"exp", "obs", "seed", "threads", "alpha", "estimators", "k_folds", "basis",
                  "contrast_learner", "q_degree", "g_degree", "clip", "folds_exp", "dgp"},
                 "estimate");
  apply_flags(cfg, g);
  if (!exp_path.empty()) cfg["exp"] = exp_path;
  if (!obs_path.empty()) cfg["obs"] = obs_path;
  if (!cfg.contains("exp") || !cfg.contains("obs")) throw config_error("estimate needs --exp and --obs");

  const std::string exp_file = cfg["exp"].get<std::string>();
  const std::string obs_file = cfg["obs"].get<std::string>();
  for (const auto& p : {exp_file, obs_file}) {
    if (!fs::exists(p)) throw config_error("input file '" + p + "' does not exist");
  }
  const auto estimators = estimators_from(cfg);
  tcal::TauBarConfig tb;
  tb.k_folds = get_or(cfg, "k_folds", 5);
  tb.psi = tcal::BasisExpansion::parse(get_or<std::string>(cfg, "basis", "poly1"));
  tb.learner = tcal::ContrastLearnerSpec::parse(get_or<std::string>(cfg, "contrast_learner", "ridge_poly2"));
  if (cfg.contains("dgp")) tb.learner.dgp = dgp_from(cfg["dgp"]);
  tb.alpha = get_or(cfg, "alpha", 0.05);
  tb.seed = get_or<std::uint64_t>(cfg, "seed", 0);
  tb.stream = kStreamEstimate;
  if (!(tb.alpha > 0.0 && tb.alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");

  const auto exp = tcal::csv::read_experimental_file(exp_file);
  const auto obs = tcal::csv::read_observational_file(obs_file);
  tcal::require_same_dimension(exp, obs);

  json reports = json::array();
  std::optional<tcal::ContrastFit> contrast;
  for (const auto& e : estimators) {
    if (e != "tau_bar") continue;
    tcal::TauBarRun run = tcal::run_tau_bar(exp, obs, tb);
    contrast = run.contrast;
    reports.push_back(tcal::to_json(run.report));
  }
  const bool baselines = std::any_of(estimators.begin(), estimators.end(),
                                     [](const std::string& e) { return e != "tau_bar"; });
  if (baselines) {
    if (!contrast) {
      tcal::RngStream rng = tcal::RngStream(tb.seed, tb.stream).substream(1);
      const auto folds = tcal::with_stage("partition_folds",
                                          [&] { return tcal::partition_folds(obs.size(), tb.k_folds, rng); });
      contrast = tcal::with_stage("fit_contrast_crossfit",
                                  [&] { return tcal::fit_contrast_crossfit(obs, folds, tb.learner); });
    }
    tcal::BaselineConfig bc;
    bc.q_degree = get_or(cfg, "q_degree", exp.dim() == 1 ? 2 : 1);
    bc.g_degree = get_or(cfg, "g_degree", 1);
    bc.odds.clip = get_or(cfg, "clip", 1e-6);
    bc.cate.folds_exp = get_or(cfg, "folds_exp", 5);
    bc.cate.seed = tcal::RngStream(tb.seed, tb.stream).substream(3)();
    bc.alpha = tb.alpha;
    const auto inputs = tcal::build_baseline_inputs(exp, obs, *contrast, bc);
    for (const auto& e : estimators) {
      if (e == "aipsw") reports.push_back(tcal::to_json(tcal::estimate_aipsw(inputs)));
      if (e == "collab") reports.push_back(tcal::to_json(tcal::estimate_collab(inputs)));
    }
  }
  json doc;
  doc["config"] = cfg;
  doc["reports"] = std::move(reports);
  const std::string text = doc.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    write_text(g.out, text);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

/// "theta=0,0.1;eta=0,0.5" -> cartesian product of assignments, in order.
std::vector<std::vector<std::pair<std::string, double>>> expand_grid(const std::string& grid) {
  static const std::set<std::string> keys{"theta", "eta", "sigma0_sq", "n", "n_obs", "k_folds"};
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const auto& part : split_list(grid, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw config_error("invalid grid token '" + part + "' (expected key=v1,v2,...)");
    const std::string key = part.substr(0, eq);
    if (!keys.count(key)) throw config_error("invalid grid key '" + key + "'");
    std::vector<double> values;
    for (const auto& v : split_list(part.substr(eq + 1), ',')) {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (v.empty() || used != v.size()) throw config_error("invalid grid value '" + v + "' for '" + key + "'");
      values.push_back(x);
    }
    if (values.empty()) throw config_error("grid key '" + key + "' has no values");
    axes.emplace_back(key, std::move(values));
  }
  std::vector<std::vector<std::pair<std::string, double>>> out{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::vector<std::pair<std::string, double>>> next;
    for (const auto& prefix : out) {
      for (double v : values) {
        auto row = prefix;
        row.emplace_back(key, v);
        next.push_back(std::move(row));
      }
    }
    out = std::move(next);
  }
  return out;
}

tcal::ScenarioConfig scenario_from(const json& cfg) {
  tcal::ScenarioConfig s;
  const std::string family = get_or<std::string>(cfg, "family", "univariate");
  if (family == "univariate") {
    s.family = tcal::DgpFamily::univariate_kallus;
  } else if (family == "multivariate") {
    s.family = tcal::DgpFamily::multivariate;
  } else {
    throw config_error("unknown family '" + family + "'");
  }
  s.theta = get_or(cfg, "theta", 0.0);
  s.eta = get_or(cfg, "eta", 0.0);
  s.sigma0_sq = get_or(cfg, "sigma0_sq", 1.0);
  s.dim = get_or(cfg, "dim", 10);
  s.n = get_or<std::size_t>(cfg, "n", 100);
  s.n_obs = get_or<std::size_t>(cfg, "n_obs", 10000);
  s.reps = get_or<std::size_t>(cfg, "reps", 100);
  s.estimators = estimators_from(cfg);
  s.contrast_learner = get_or<std::string>(cfg, "contrast_learner", "oracle");
  s.k_folds = get_or(cfg, "k_folds", 5);
  s.basis = get_or<std::string>(cfg, "basis", "poly1");
  s.alpha = get_or(cfg, "alpha", 0.05);
  s.seed = get_or<std::uint64_t>(cfg, "seed", 1);
  s.threads = get_or(cfg, "threads", 1u);
  if (cfg.contains("q_degree")) s.q_degree = get_or(cfg, "q_degree", 1);
  s.g_degree = get_or(cfg, "g_degree", 1);
  s.clip = get_or(cfg, "clip", 1e-6);
  s.folds_exp = get_or(cfg, "folds_exp", 5);
  return s;
}

int cmd_simulate(const GlobalFlags& g, const std::string& grid_flag) {
  json cfg = load_config(g.config_path);
  reject_unknown(cfg,
                 {"family", "theta", "eta", "sigma0_sq", "dim", "n", "n_obs", "reps", "estimators",
                  "contrast_learner", "k_folds", "basis", "alpha", "seed", "threads", "q_degree",
                  "g_degree", "clip", "folds_exp", "grid"},
                 "simulate");
  apply_flags(cfg, g);
  if (!grid_flag.empty()) cfg["grid"] = grid_flag;
  const std::string grid = get_or<std::string>(cfg, "grid", "");
  const auto points = expand_grid(grid);

  // Validate every scenario before running any.
  std::vector<tcal::ScenarioConfig> scenarios;
  for (std::size_t k = 0; k < points.size(); ++k) {
    json sc = cfg;
    sc.erase("grid");
    std::string id;
    for (const auto& [key, v] : points[k]) {
      if (key == "n" || key == "n_obs" || key == "k_folds") {
        sc[key] = static_cast<std::int64_t>(v);
      } else {
        sc[key] = v;
      }
      id += (id.empty() ? "" : "_") + key + "-" + tcal::csv::format_double(v);
    }
    tcal::ScenarioConfig s = scenario_from(sc);
    s.id = id.empty() ? "base" : id;
    s.scenario_index = k + 1;
    s.validate();
    scenarios.push_back(std::move(s));
  }

  const fs::path out = g.out.empty() ? fs::path("tcal_out") : fs::path(g.out);
  std::vector<tcal::ScenarioResult> results;
  bool unreliable = false;
  for (const auto& s : scenarios) {
    results.push_back(tcal::run_scenario(s));
    tcal::write_scenario_outputs(results.back(), out);
    unreliable = unreliable || results.back().unreliable;
    std::cerr << "scenario " << s.id << " done\n";
  }
  const auto table = tcal::coverage_table(results);
  write_text(out / "coverage_table.csv", "# config: " + cfg.dump() + "\n" + table.to_csv());
  json tj;
  tj["config"] = cfg;
  tj["rows"] = table.to_json();
  write_text(out / "coverage_table.json", tj.dump(2) + "\n");
  if (unreliable) std::cerr << "warning: at least one scenario had >10% failed replications\n";
  return kExitOk;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const GlobalFlags& g) {
  json cfg = load_config(g.config_path);
  reject_unknown(cfg, {"family", "theta", "eta", "sigma0_sq", "dim", "n", "n_obs", "seed", "threads",
                       "alpha", "estimators"},
                 "generate");
  apply_flags(cfg, g);
  const tcal::DgpSpec dgp = dgp_from(cfg);
  const auto n = get_or<std::size_t>(cfg, "n", 100);
  const auto n_obs = get_or<std::size_t>(cfg, "n_obs", 10000);
  tcal::RngStream rng(get_or<std::uint64_t>(cfg, "seed", 1), kStreamGenerate);
  const auto pair = tcal::sample_dgp(dgp, n, n_obs, rng);
  const fs::path out = g.out.empty() ? fs::path(".") : fs::path(g.out);
  std::ostringstream e, o;
  e << "# config: " << cfg.dump() << "\n";
  tcal::csv::write_experimental(e, pair.exp);
  o << "# config: " << cfg.dump() << "\n";
  tcal::csv::write_observational(o, pair.obs);
  write_text(out / "exp.csv", e.str());
  write_text(out / "obs.csv", o.str());
  return kExitOk;
}

// ---------------------------------------------------------------- oracle

int cmd_oracle(const GlobalFlags& g) {
  json cfg = load_config(g.config_path);
  reject_unknown(cfg, {"family", "theta", "eta", "sigma0_sq", "dim", "basis", "n", "n_obs", "rho2",
                       "quadrature_order", "grid_min", "grid_max", "grid_points", "seed", "threads",
                       "alpha", "estimators"},
                 "oracle");
  apply_flags(cfg, g);
  const tcal::DgpSpec dgp = dgp_from(cfg);
  const auto psi = tcal::BasisExpansion::parse(get_or<std::string>(cfg, "basis", "poly1"));
  tcal::QuadratureSpec q;
  q.order = get_or(cfg, "quadrature_order", 64);
  if (q.order < 32) throw config_error("quadrature_order must be >= 32");
  const double n = static_cast<double>(get_or<std::size_t>(cfg, "n", 100));
  const double n_obs = static_cast<double>(get_or<std::size_t>(cfg, "n_obs", 10000));
  const double rho2 = get_or(cfg, "rho2", n / (n + n_obs));
  const double lo = get_or(cfg, "grid_min", -4.0);
  const double hi = get_or(cfg, "grid_max", 4.0);
  const int points = get_or(cfg, "grid_points", 161);
  if (points < 2 || !(hi > lo)) throw config_error("weight grid needs grid_points >= 2 and grid_max > grid_min");

  const auto est = tcal::oracle_estimands(dgp, psi, q);
  const auto gamma = tcal::weight_gamma_minvar(dgp, psi, est, q);

  auto vec = [](const tcal::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json doc;
  doc["config"] = cfg;
  doc["dgp"] = dgp.label();
  doc["tau"] = est.tau;
  doc["tau_bar"] = est.tau_bar;
  doc["beta_bar"] = vec(est.beta_bar);
  doc["alpha_bar"] = vec(est.alpha_bar);
  doc["sigma"] = est.sigma;
  doc["gamma"] = vec(gamma.gamma);
  doc["well_specified"] = gamma.well_specified;
  doc["rho2"] = rho2;

  // Weight grid along x1; other coordinates at the observational mean.
  std::ostringstream grid;
  grid << "# config: " << cfg.dump() << "\n";
  grid << "x,w,lambda,pi\n";
  std::vector<double> x(static_cast<std::size_t>(dgp.dim));
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = dgp.obs.mean[j];
  for (int k = 0; k < points; ++k) {
    x[0] = lo + (hi - lo) * k / (points - 1);
    const tcal::Covariate c(x);
    grid << tcal::csv::format_double(x[0]) << ','
         << tcal::csv::format_double(tcal::weight_function(c, dgp, psi, est, gamma.gamma)) << ','
         << tcal::csv::format_double(dgp.likelihood_ratio(c)) << ','
         << tcal::csv::format_double(tcal::sampling_propensity(c, rho2, dgp)) << "\n";
  }
  const fs::path out = g.out.empty() ? fs::path(".") : fs::path(g.out);
  write_text(out / "oracle.json", doc.dump(2) + "\n");
  write_text(out / "weight_grid.csv", grid.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated transported treatment effects: estimation, simulation, oracle"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (u64)");
  app.add_option("--threads", g.threads, "worker thread cap");
  app.add_option("--out", g.out, "output directory (or file for estimate)");
  app.add_option("--estimators", g.estimators, "comma list of tau_bar,aipsw,collab");
  app.add_option("--alpha", g.alpha, "CI level alpha");

  std::string exp_path, obs_path, grid;
  auto* est = app.add_subcommand("estimate", "estimate from experimental and observational CSVs");
  est->add_option("--exp", exp_path, "experimental CSV (d,x1..xp)");
  est->add_option("--obs", obs_path, "observational CSV (y,z,x1..xp)");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo scenarios over a parameter grid");
  sim->add_option("--grid", grid, "grid, e.g. theta=0,0.3,0.7;n=100");
  auto* gen = app.add_subcommand("generate", "write simulated datasets as CSV");
  auto* ora = app.add_subcommand("oracle", "population estimands and weight grid");
  for (auto* sub : {est, sim, gen, ora}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*est) return cmd_estimate(g, exp_path, obs_path);
    if (*sim) return cmd_simulate(g, grid);
    if (*gen) return cmd_generate(g);
    if (*ora) return cmd_oracle(g);
  } catch (const tcal::Error& e) {
    std::cerr << "error: " << e.describe() << "\n";
    switch (e.kind()) {
      case tcal::ErrorKind::parse:
      case tcal::ErrorKind::config:
      case tcal::ErrorKind::invalid_argument: return kExitConfig;
      default: return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
