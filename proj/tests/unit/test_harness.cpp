#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tcal/harness.hpp"

using Catch::Approx;
using namespace tcal;

namespace {

ScenarioConfig small(double theta, std::size_t reps) {
  ScenarioConfig c;
  c.id = "t";
  c.theta = theta;
  c.n = 100;
  c.n_obs = 2000;
  c.reps = reps;
  c.seed = 17;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

EstimateReport fixed_report(double v) {
  EstimateReport r;
  r.estimator = "stub";
  r.point = v;
  r.variance = 0.0;
  r.ci_lower = r.ci_upper = v;
  return r;
}

}  // namespace

TEST_CASE("a single replication is deterministic", "[harness]") {
  const auto a = run_scenario(small(0.3, 1));
  const auto b = run_scenario(small(0.3, 1));
  REQUIRE(a.rows.size() == 3);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].estimator == b.rows[i].estimator);
    CHECK(a.rows[i].point == b.rows[i].point);
    CHECK(a.rows[i].variance == b.rows[i].variance);
  }
  CHECK(a.rows[0].estimator == "tau_bar");
  CHECK(a.rows[1].estimator == "aipsw");
  CHECK(a.rows[2].estimator == "collab");
  auto other = small(0.3, 1);
  other.seed = 18;
  CHECK(run_scenario(other).rows[0].point != a.rows[0].point);
}

TEST_CASE("stub estimator at the target has zero error", "[harness]") {
  auto c = small(0.5, 5);
  c.estimators = {"tau_bar"};
  const auto est = oracle_estimands(c.dgp(), BasisExpansion());
  const double tb = est.tau_bar, tau = est.tau;
  c.custom.push_back({"stub_bar", EstimandKind::tau_bar, [tb](const SimulatedPair&, RngStream&) {
                        return fixed_report(tb);
                      }});
  c.custom.push_back({"stub_tau", EstimandKind::tau, [tau](const SimulatedPair&, RngStream&) {
                        return fixed_report(tau);
                      }});
  const auto r = run_scenario(c);
  for (const char* name : {"stub_bar", "stub_tau"}) {
    INFO(name);
    const auto& s = r.summary(name);
    CHECK(s.count == 5);
    CHECK(std::abs(s.bias) < 1e-12);
    CHECK(std::abs(s.variance) < 1e-20);
    CHECK(s.coverage == 1.0);
  }
  CHECK(r.summary("stub_bar").target == Approx(1.575).margin(1e-6));
  CHECK(r.summary("stub_tau").target == Approx(1.75).margin(1e-9));
}

TEST_CASE("failing estimator rows are counted", "[harness]") {
  auto c = small(0.0, 4);
  c.estimators = {"tau_bar"};
  c.custom.push_back({"boom", EstimandKind::tau, [](const SimulatedPair&, RngStream&) -> EstimateReport {
                        throw Error(ErrorKind::numerical, "boom");
                      }});
  const auto r = run_scenario(c);
  CHECK(r.summary("boom").failures == 4);
  CHECK(r.summary("boom").count == 0);
  CHECK(r.summary("tau_bar").failures == 0);
  // 4 of 8 rows failed.
  CHECK(r.unreliable);
  const auto csv = reps_csv(r);
  CHECK(csv.find("boom,nan,nan,nan,nan,0,1") != std::string::npos);
}

TEST_CASE("mse decomposes into bias and variance", "[harness]") {
  const auto r = run_scenario(small(0.7, 8));
  for (const auto& s : r.summaries) {
    INFO(s.estimator);
    REQUIRE(s.count + s.failures == 8);
    CHECK(std::abs(s.mse - (s.bias * s.bias + s.variance)) < 1e-10);
    // Independent recomputation from the rows.
    double sum = 0, sq = 0, cov = 0;
    std::size_t m = 0;
    for (const auto& row : r.rows) {
      if (row.estimator != s.estimator || row.failed) continue;
      sum += row.point;
      sq += (row.point - s.target) * (row.point - s.target);
      cov += (row.ci_lo <= s.target && s.target <= row.ci_hi) ? 1 : 0;
      ++m;
    }
    CHECK(s.mean == Approx(sum / static_cast<double>(m)).epsilon(1e-12));
    CHECK(s.mse == Approx(sq / static_cast<double>(m)).epsilon(1e-12));
    CHECK(s.coverage == Approx(cov / static_cast<double>(m)));
  }
}

TEST_CASE("estimators are scored against their own estimand", "[harness]") {
  ScenarioConfig c;
  c.id = "mv";
  c.family = DgpFamily::multivariate;
  c.eta = 0.5;
  c.n = 100;
  c.n_obs = 2000;
  c.reps = 2;
  const auto r = run_scenario(c);
  CHECK(r.estimands.tau == Approx(1.18).margin(0.02));
  CHECK(r.estimands.tau_bar == Approx(1.79).margin(0.02));
  CHECK(r.summary("tau_bar").target == r.estimands.tau_bar);
  CHECK(r.summary("tau_bar").target_name == "tau_bar");
  CHECK(r.summary("aipsw").target == r.estimands.tau);
  CHECK(r.summary("collab").target == r.estimands.tau);
  for (const auto& row : r.rows) {
    const double target = row.estimator == "tau_bar" ? r.estimands.tau_bar : r.estimands.tau;
    if (!row.failed) CHECK(row.covered == (row.ci_lo <= target && target <= row.ci_hi));
  }
}

TEST_CASE("results do not depend on threads or estimator order", "[harness]") {
  auto c = small(0.3, 6);
  const auto one = run_scenario(c);
  c.threads = 3;
  const auto three = run_scenario(c);
  REQUIRE(one.rows.size() == three.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].estimator == three.rows[i].estimator);
    CHECK(one.rows[i].point == three.rows[i].point);
  }
  CHECK(reps_csv(one) == reps_csv(three));

  auto rev = small(0.3, 6);
  rev.estimators = {"collab", "tau_bar", "aipsw"};
  const auto r2 = run_scenario(rev);
  for (const char* e : {"tau_bar", "aipsw", "collab"}) {
    CHECK(r2.summary(e).mean == one.summary(e).mean);
  }
  // A scenario's replications are a prefix-stable sequence.
  auto shorter = small(0.3, 3);
  const auto r3 = run_scenario(shorter);
  for (std::size_t i = 0; i < r3.rows.size(); ++i) CHECK(r3.rows[i].point == one.rows[i].point);
}

TEST_CASE("config validation", "[harness]") {
  auto c = small(0.3, 1);
  c.estimators = {"tau_bar", "ipw"};
  CHECK_THROWS_AS(run_scenario(c), Error);
  c = small(0.3, 0);
  CHECK_THROWS_AS(run_scenario(c), Error);
  c = small(1.2, 1);
  try {
    run_scenario(c);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  c = small(0.3, 1);
  c.basis = "cubic";
  CHECK_THROWS_AS(run_scenario(c), Error);
}

TEST_CASE("scenario output files", "[harness]") {
  auto c = small(0.3, 3);
  c.id = "7";
  const auto r = run_scenario(c);
  const auto dir = std::filesystem::temp_directory_path() / "tcal_harness_out";
  std::filesystem::remove_all(dir);
  write_scenario_outputs(r, dir);

  const auto csv = slurp(dir / "scenario_7_reps.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("# config: ", 0) == 0);
  const auto cfg = nlohmann::json::parse(line.substr(10));
  CHECK(cfg["theta"] == 0.3);
  CHECK(cfg["reps"] == 3);
  std::getline(in, line);
  CHECK(line == "rep,estimator,point,variance,ci_lo,ci_hi,covered,failed");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
  }
  CHECK(rows == 9);

  const auto j = nlohmann::json::parse(slurp(dir / "scenario_7_summary.json"));
  CHECK(j["scenario"] == "7");
  CHECK(j["estimands"]["tau"].get<double>() == Approx(1.75).margin(1e-9));
  CHECK(j["estimands"]["tau_bar"].get<double>() == Approx(r.estimands.tau_bar));
  REQUIRE(j["estimators"].size() == 3);
  for (const auto& e : j["estimators"]) {
    const auto& s = r.summary(e["estimator"].get<std::string>());
    CHECK(e["mse"].get<double>() == Approx(s.mse));
    CHECK(e["coverage"].get<double>() == Approx(s.coverage));
    CHECK(e["count"] == 3);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("coverage table", "[harness]") {
  auto a = small(0.0, 2);
  a.id = "a";
  auto b = small(0.7, 2);
  b.id = "b";
  b.estimators = {"tau_bar"};
  const std::vector<ScenarioResult> res{run_scenario(a), run_scenario(b)};
  const auto t = coverage_table(res);
  REQUIRE(t.scenarios == std::vector<std::string>{"a", "b"});
  REQUIRE(t.estimators.size() == 3);
  CHECK(t.coverage[0][0] == res[0].summary("tau_bar").coverage);
  CHECK(t.width[1][0] == res[1].summary("tau_bar").mean_width);
  CHECK(std::isnan(t.coverage[1][1]));

  const auto csv = t.to_csv();
  CHECK(csv.rfind("scenario,tau_bar_coverage_pct,tau_bar_mean_width,aipsw_coverage_pct,aipsw_mean_width,"
                  "collab_coverage_pct,collab_mean_width\n",
                  0) == 0);
  CHECK(csv.find("\nb,") != std::string::npos);
  CHECK(csv.find("nan") != std::string::npos);

  const auto j = t.to_json();
  REQUIRE(j.size() == 2);
  CHECK(j[1]["aipsw"]["coverage_pct"].is_null());
  CHECK(j[0]["tau_bar"]["coverage_pct"].get<double>() == Approx(100 * t.coverage[0][0]));
  CHECK_THROWS(coverage_table({}));
}
