#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "didcatt/error.hpp"
#include "didcatt/eval.hpp"

using namespace didcatt;

TEST_CASE("mse_treated examples") {
  Vector theta(5), d(5), pred(5);
  theta << 0.1, -0.4, 2.0, 0.0, 1.5;
  d << 1, 0, 1, 1, 0;
  pred << 0.3, 9.0, 1.0, -0.5, 7.0;
  CHECK(mse_treated(theta, d, theta) == 0.0);
  CHECK(mse_treated(Vector(theta.array() + 1.0), d, theta) == doctest::Approx(1.0).epsilon(1e-15));
  const double hand = (0.2 * 0.2 + 1.0 + 0.25) / 3.0;
  CHECK(mse_treated(pred, d, theta) == doctest::Approx(hand).epsilon(1e-15));
  CHECK_THROWS_AS(mse_treated(pred, Vector::Zero(5), theta), Error);
}

TEST_CASE("type-7 quantile and tie handling") {
  CHECK(quantile7({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile7({1, 2, 3, 4}, 0.25) == 1.75);
  CHECK(quantile7({5}, 0.9) == 5.0);
  const std::vector<double> t = {0.0, 1.0};
  CHECK(assign_bin(t, -3.0) == 0);
  CHECK(assign_bin(t, 0.0) == 0);
  CHECK(assign_bin(t, 0.5) == 1);
  CHECK(assign_bin(t, 1.0) == 1);
  CHECK(assign_bin(t, 1.0001) == 2);
}

namespace {

PseudoOutcome toy_pseudo(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PseudoOutcome p;
  p.y_hat.resize(static_cast<Eigen::Index>(n));
  p.d.resize(static_cast<Eigen::Index>(n));
  p.x.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < p.d.size(); ++i) {
    p.x(i, 0) = standard_normal(rng);
    p.d(i) = uniform01(rng) < 0.4 ? 1.0 : 0.0;
    p.y_hat(i) = p.d(i) * (1.0 + p.x(i, 0)) + standard_normal(rng);
  }
  p.x_names = {"x"};
  return p;
}

}  // namespace

TEST_CASE("calibration invariants") {
  const PseudoOutcome test = toy_pseudo(4000, 1);
  const PseudoOutcome val = toy_pseudo(2000, 2);
  const Vector vp = val.x.col(0), tp = test.x.col(0);
  const CalibrationReport r = calibrate_predictions(vp, tp, test, 4);
  REQUIRE(r.bins.size() == 4);
  std::size_t count = 0;
  double num = 0.0, den = 0.0;
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    count += r.bins[b].count;
    num += r.bins[b].numerator;
    den += r.bins[b].denominator;
    if (b > 0) CHECK(r.bins[b].att > r.bins[b - 1].att);
    CHECK(r.bins[b].ci_lo < r.bins[b].att);
  }
  CHECK(count == test.size());
  CHECK(r.overall_att == doctest::Approx(num / den).epsilon(1e-14));
  CHECK(r.overall_att == doctest::Approx(att(test)).epsilon(1e-12));
  for (std::size_t i = 1; i < r.thresholds.size(); ++i) CHECK(r.thresholds[i] > r.thresholds[i - 1]);

  // Delta-method SE against a direct computation for bin 0.
  std::vector<double> y, d;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (r.bin_of[i] == 0) {
      y.push_back(test.y_hat(static_cast<Eigen::Index>(i)));
      d.push_back(test.d(static_cast<Eigen::Index>(i)));
    }
  double sy = 0, sd = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    sy += y[k];
    sd += d[k];
  }
  const double a = sy / sd;
  double m = 0, ss = 0;
  for (std::size_t k = 0; k < y.size(); ++k) m += y[k] - a * d[k];
  m /= static_cast<double>(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) ss += std::pow(y[k] - a * d[k] - m, 2);
  const double se = std::sqrt(ss / static_cast<double>(y.size() - 1)) /
                    (std::sqrt(static_cast<double>(y.size())) * (sd / static_cast<double>(y.size())));
  CHECK(r.bins[0].att == doctest::Approx(a).epsilon(1e-12));
  CHECK(r.bins[0].se == doctest::Approx(se).epsilon(1e-10));

  const CalibrationReport boot = calibrate_predictions(vp, tp, test, 4, {500, 9});
  const CalibrationReport boot2 = calibrate_predictions(vp, tp, test, 4, {500, 9});
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(boot.bins[b].se == boot2.bins[b].se);
    CHECK(boot.bins[b].se == doctest::Approx(r.bins[b].se).epsilon(0.15));
  }
  CHECK(r.plot_csv().rows.size() == 4);
  CHECK_THROWS_AS(calibrate_predictions(vp, tp, test, 1), Error);
}

TEST_CASE("constant predictions collapse to one effective bin") {
  const PseudoOutcome test = toy_pseudo(500, 3);
  const CalibrationReport r =
      calibrate_predictions(Vector::Constant(100, 0.7), Vector::Constant(500, 0.7), test, 5);
  CHECK(r.collapsed == 3);
  std::size_t nonempty = 0;
  for (const auto& b : r.bins)
    if (!b.empty) {
      ++nonempty;
      CHECK(b.att == doctest::Approx(r.overall_att).epsilon(1e-14));
      CHECK(b.count == 500);
    }
  CHECK(nonempty == 1);
  CHECK_FALSE(r.notes.empty());
}

namespace {

BenchmarkConfig tiny_grid() {
  BenchmarkConfig c;
  DgpSetup d;
  d.name = "cpt";
  d.config.n = 800;
  c.dgps.push_back(d);
  NuisanceSetup nu;
  nu.name = "ridge";
  nu.g.lambda = 1.0;
  nu.pi.kind = LearnerKind::kLogistic;
  nu.folds = 2;
  c.nuisances.push_back(nu);
  LearnerSetup a;
  a.name = "dr_linear";
  a.final_spec.kind = LearnerKind::kLinear;
  LearnerSetup b = a;
  b.name = "or_linear";
  b.estimator = "or";
  c.learners = {a, b};
  c.replications = 3;
  c.n_test = 300;
  c.master_seed = 17;
  return c;
}

}  // namespace

TEST_CASE("benchmark determinism and layout") {
  BenchmarkConfig c = tiny_grid();
  const BenchmarkResult a = run_benchmark(c);
  c.jobs = 3;
  const BenchmarkResult b = run_benchmark(c);
  CHECK(to_csv_string(a.results_csv()) == to_csv_string(b.results_csv()));
  CHECK(a.summary_json() == b.summary_json());
  CHECK(a.results_csv().rows.size() == 6);
  CHECK(a.summary_csv().rows.size() == 2);
  const BenchmarkCell& cell = a.cell("cpt", "ridge", "dr_linear");
  CHECK(cell.mean == doctest::Approx(mean(cell.mse)).epsilon(1e-15));

  // Adding a DGP cell leaves the existing cell untouched.
  BenchmarkConfig more = tiny_grid();
  DgpSetup extra;
  extra.name = "imb";
  extra.config.variant = DgpVariant::kImbalanced;
  extra.config.n = 800;
  more.dgps.insert(more.dgps.begin(), extra);
  const BenchmarkResult m = run_benchmark(more);
  CHECK(m.cell("cpt", "ridge", "dr_linear").mse == cell.mse);

  BenchmarkConfig bad = tiny_grid();
  bad.learners[0].estimator = "x_learner";
  CHECK_THROWS_AS(run_benchmark(bad), Error);
  BenchmarkConfig vio = tiny_grid();
  vio.dgps[0].config.variant = DgpVariant::kViolated;
  vio.nuisances[0].oracle = true;
  try {
    run_benchmark(vio);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("replication 0") != std::string::npos);
  }
}
