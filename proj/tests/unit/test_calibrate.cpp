#include <catch_amalgamated.hpp>

#include <random>

#include "support/formulas.hpp"
#include "support/oracles.hpp"
#include "tcal/calibrate.hpp"
#include "tcal/dgp.hpp"

using Catch::Approx;
using namespace tcal;

namespace {

Vector to_vec(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }
std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

class ShiftedContrast final : public CovariateModel {
 public:
  explicit ShiftedContrast(double s) : s_(s) {}
  double predict(Covariate x) const override { return 0.75 * x[0] * x[0] + 3 * x[0] + 1 + s_; }

 private:
  double s_;
};

TauBarConfig oracle_config(const DgpSpec& dgp, std::uint64_t seed, int k = 5) {
  TauBarConfig cfg;
  cfg.k_folds = k;
  cfg.learner = ContrastLearnerSpec::parse("oracle");
  cfg.learner.dgp = dgp;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("calibrate_ols examples", "[calibrate]") {
  const BasisExpansion psi;
  const Vector obs = Vector::LinSpaced(10, -1, 1);
  Vector d(3), delta(3);
  d << 1, 2, 4;
  delta << 0, 1, 2;
  const auto fit = calibrate_ols(d, delta, obs, psi);
  CHECK(fit.beta_hat(0) == Approx(5.0 / 6).epsilon(1e-12));
  CHECK(fit.beta_hat(1) == Approx(1.5).epsilon(1e-12));
  // Normal equations hold.
  const Vector ne = psi.design(delta).transpose() * (d - psi.design(delta) * fit.beta_hat);
  CHECK(ne.norm() < 1e-8);

  const Vector many = Vector::LinSpaced(30, -2, 5);
  const auto flat = calibrate_ols(Vector::Constant(30, 1.7), many, obs, psi);
  CHECK(flat.beta_hat(0) == Approx(1.7).margin(1e-8));
  CHECK(flat.beta_hat(1) == Approx(0.0).margin(1e-8));

  const auto lin = calibrate_ols((2.0 + 3.0 * many.array()).matrix(), many, obs, psi);
  CHECK(lin.beta_hat(0) == Approx(2.0).margin(1e-10));
  CHECK(lin.beta_hat(1) == Approx(3.0).margin(1e-10));
  CHECK(lin.residual_vectors.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(lin.gram.isApprox(lin.gram.transpose()));
}

TEST_CASE("calibrate_ols errors", "[calibrate]") {
  const BasisExpansion psi;
  Vector one(1);
  one << 1.0;
  try {
    calibrate_ols(one, one, one, psi);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
  try {
    calibrate_ols(Vector::LinSpaced(20, 0, 1), Vector::Constant(20, 0.4), Vector::Ones(5), psi);
    FAIL("expected collinearity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::collinearity);
    CHECK(std::string(e.what()).find("smaller basis") != std::string::npos);
  }
}

TEST_CASE("variance and interval examples", "[calibrate]") {
  CalibrationFit fit;
  fit.residual_vectors = Matrix::Zero(4, 2);
  fit.a_hat = Vector::Ones(2);
  Vector preds(2);
  preds << 0, 2;
  CHECK(variance_tau_bar(fit, preds, 1.0, 4, 2) == Approx(0.5).epsilon(1e-15));
  CHECK(variance_tau_bar(fit, Vector::Constant(2, 3.0), 3.0, 4, 2) == 0.0);
  CHECK_THROWS_AS(variance_tau_bar(fit, preds, 1.0, 4, 3), Error);

  auto [lo, hi] = confidence_interval(1.0, 0.0, 0.05);
  CHECK(lo == 1.0);
  CHECK(hi == 1.0);
  std::tie(lo, hi) = confidence_interval(0.0, 1.0, 0.05);
  CHECK(lo == Approx(-1.959964).margin(1e-5));
  CHECK(hi == Approx(1.959964).margin(1e-5));
  std::tie(lo, hi) = confidence_interval(2.0, 0.25, 0.32);
  const double z84 = oracle::quantile_bisect(0.84);
  CHECK(z84 == Approx(0.9945).margin(1e-4));
  CHECK(lo == Approx(2 - 0.5 * z84).margin(1e-9));
  CHECK(hi == Approx(2 + 0.5 * z84).margin(1e-9));
  CHECK_THROWS_AS(confidence_interval(0.0, -1e-3, 0.05), Error);
  CHECK_THROWS_AS(confidence_interval(0.0, 1.0, 1.0), Error);
}

TEST_CASE("table form matches the literal formulas", "[calibrate]") {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z;
  for (std::size_t n : {20u, 50u}) {
    for (int degree : {1, 2}) {
      std::vector<double> d(n), de(n), dobs(3 * n);
      for (std::size_t i = 0; i < n; ++i) {
        de[i] = z(gen);
        d[i] = 1 + de[i] - 0.3 * de[i] * de[i] + z(gen);
      }
      for (auto& v : dobs) v = 0.4 + z(gen);
      const BasisExpansion psi(degree);
      const auto fit = calibrate_ols(to_vec(d), to_vec(de), to_vec(dobs), psi);
      const auto lit = formulas::calibrate(d, de, dobs, degree);
      for (int j = 0; j <= degree; ++j) {
        CHECK(fit.beta_hat(j) == Approx(lit.beta[static_cast<std::size_t>(j)]).epsilon(1e-10).margin(1e-12));
        CHECK(fit.a_hat(j) == Approx(lit.a[static_cast<std::size_t>(j)]).epsilon(1e-10).margin(1e-12));
      }
      const Vector preds = out_of_fold_predictions(to_vec(dobs), fit, psi);
      const double tb = preds.mean();
      const double v = variance_tau_bar(fit, preds, tb, n, dobs.size());
      CHECK(v == Approx(formulas::variance_tau_bar(lit, to_std(preds), tb)).epsilon(1e-10));
      CHECK(v >= 0);
    }
  }
}

TEST_CASE("estimate_tau_bar examples", "[calibrate]") {
  const auto dgp = DgpSpec::univariate(0.0);
  const BasisExpansion psi;
  RngStream rng(12, 1);
  const auto pair = sample_dgp(dgp, 10, 200000, rng);
  RngStream frng(1, 1);
  const auto folds = partition_folds(pair.obs.size(), 5, frng);
  auto spec = ContrastLearnerSpec::parse("oracle");
  spec.dgp = dgp;
  const auto contrast = fit_contrast_crossfit(pair.obs, folds, spec);

  CalibrationFit fit;
  fit.beta_hat = Vector(2);
  fit.beta_hat << 0.37, 0.0;
  CHECK(estimate_tau_bar(pair.obs, folds, contrast, fit, psi) == Approx(0.37).epsilon(1e-11));
  fit.beta_hat << 0.0, 1.0;
  // E_obs[Delta] = 0.75 + 1 for X ~ N(0, 1); sd(Delta) ~ 3.2.
  CHECK(estimate_tau_bar(pair.obs, folds, contrast, fit, psi) == Approx(1.75).margin(0.035));

  RngStream other(1, 2);
  const auto wrong = partition_folds(pair.obs.size(), 4, other);
  CHECK_THROWS_AS(estimate_tau_bar(pair.obs, wrong, contrast, fit, psi), Error);
}

TEST_CASE("per-fold shifts average by fold size", "[calibrate]") {
  const BasisExpansion psi;
  RngStream rng(5, 5);
  const auto pair = sample_dgp(DgpSpec::univariate(0.3), 10, 501, rng);
  RngStream frng(5, 6);
  const auto folds = partition_folds(501, 2, frng);
  const double s0 = 0.8, s1 = -2.5;
  const ContrastFit two({std::make_shared<ShiftedContrast>(s0), std::make_shared<ShiftedContrast>(s1)},
                        {folds.training_rows(0), folds.training_rows(1)}, "shifted");
  const double w = (static_cast<double>(folds.members(0).size()) * s0 +
                    static_cast<double>(folds.members(1).size()) * s1) / 501.0;
  const FoldAssignment single(std::vector<int>(501, 0), 1);
  const ContrastFit one({std::make_shared<ShiftedContrast>(w)}, {single.training_rows(0)}, "shifted");
  CalibrationFit fit;
  fit.beta_hat = Vector(2);
  fit.beta_hat << 0.4, 1.3;
  CHECK(estimate_tau_bar(pair.obs, folds, two, fit, psi) ==
        Approx(estimate_tau_bar(pair.obs, single, one, fit, psi)).epsilon(1e-13));
}

TEST_CASE("pipeline covers the oracle estimand", "[calibrate][pipeline]") {
  const auto dgp = DgpSpec::univariate(0.0);
  int inside = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    RngStream rng(s, 77);
    const auto pair = sample_dgp(dgp, 100, 10000, rng);
    const auto r = run_tau_bar_pipeline(pair.exp, pair.obs, oracle_config(dgp, s));
    CHECK(r.variance > 0);
    CHECK(r.ci_lower <= r.point);
    CHECK(r.point <= r.ci_upper);
    if (std::abs(r.point - 1.75) < 4 * std::sqrt(r.variance)) ++inside;
  }
  CHECK(inside >= 9);
}

TEST_CASE("pipeline exact linear case and identities", "[calibrate][pipeline]") {
  const auto dgp = DgpSpec::univariate(0.3);
  RngStream rng(8, 1);
  const auto pair = sample_dgp(dgp, 60, 3000, rng);
  const auto cfg = oracle_config(dgp, 4);
  Vector dd(60);
  for (std::size_t i = 0; i < 60; ++i) dd(static_cast<Eigen::Index>(i)) = 1 + dgp.delta(pair.exp.x(i));
  const auto exact = pair.exp.with_d(dd);
  const auto run = run_tau_bar(exact, pair.obs, cfg);
  Vector delta_obs(3000);
  for (std::size_t i = 0; i < 3000; ++i) delta_obs(static_cast<Eigen::Index>(i)) = dgp.delta(pair.obs.x(i));
  CHECK(run.report.point == Approx(1 + delta_obs.mean()).epsilon(1e-12));
  CHECK(run.report.diagnostic("variance_calibration_term") < 1e-24);
  const double second = (run.obs_predictions.array() - run.report.point).square().sum() / (3000.0 * 3000.0);
  CHECK(run.report.variance == Approx(second).epsilon(1e-10));

  // Point is exactly the mean of the predictions the variance uses.
  const auto noisy = run_tau_bar(pair.exp, pair.obs, cfg);
  CHECK(noisy.report.point == noisy.obs_predictions.mean());
  CHECK(noisy.report.diagnostic("gram_condition_number") >= 1.0);
  CHECK(std::get<std::string>(noisy.report.diagnostics.at("basis")) == "poly1");
}

TEST_CASE("affine equivariance and basis translation", "[calibrate][pipeline]") {
  const auto dgp = DgpSpec::univariate(0.5);
  RngStream rng(19, 2);
  const auto pair = sample_dgp(dgp, 100, 2000, rng);
  auto cfg = oracle_config(dgp, 3);
  const auto base = run_tau_bar_pipeline(pair.exp, pair.obs, cfg);
  const double a = -1.5, b = 2.5;
  const auto moved = run_tau_bar_pipeline(pair.exp.with_d((a + b * pair.exp.d().array()).matrix()), pair.obs, cfg);
  CHECK(moved.point == Approx(a + b * base.point).epsilon(1e-10));
  CHECK(moved.variance == Approx(b * b * base.variance).epsilon(1e-9));

  cfg.psi = BasisExpansion(1, 7.0);
  const auto shifted = run_tau_bar_pipeline(pair.exp, pair.obs, cfg);
  CHECK(shifted.point == Approx(base.point).margin(1e-8));
}

TEST_CASE("pipeline errors carry stage labels", "[calibrate][pipeline]") {
  const auto dgp = DgpSpec::univariate(0.0);
  RngStream rng(1, 1);
  const auto pair = sample_dgp(dgp, 1, 100, rng);
  try {
    run_tau_bar_pipeline(pair.exp, pair.obs, oracle_config(dgp, 1));
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
    CHECK(e.stage() == "calibrate_ols");
  }
  // A constant contrast is collinear with the intercept.
  auto flat = dgp;
  flat.delta = [](Covariate) { return 0.5; };
  RngStream rng2(1, 2);
  const auto p2 = sample_dgp(flat, 50, 100, rng2);
  try {
    run_tau_bar_pipeline(p2.exp, p2.obs, oracle_config(flat, 1));
    FAIL("expected collinearity");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::collinearity);
    CHECK(e.stage() == "calibrate_ols");
  }
}
