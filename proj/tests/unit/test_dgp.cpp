#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "didcatt/dgp.hpp"
#include "didcatt/error.hpp"
#include "didcatt/learners.hpp"

using namespace didcatt;

namespace {

Matrix w_row(std::vector<double> head, std::size_t d = 20) {
  Matrix w = Matrix::Zero(1, static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < head.size(); ++j) w(0, static_cast<Eigen::Index>(j)) = head[j];
  return w;
}

}  // namespace

TEST_CASE("true effect formula") {
  DgpConfig c;
  CHECK(true_catt(c, w_row({1, 1}))(0) == 0.5);
  CHECK(true_catt(c, w_row({5, -0.1}))(0) == 0.0);
  CHECK(true_catt(c, w_row({-2, 0.5}))(0) == -1.0);
  CHECK(true_catt(c, w_row({3, 0}))(0) == 0.0);
  CHECK_THROWS_AS(true_catt(c, w_row({1, 1}, 7)), Error);
}

TEST_CASE("clipped sigmoid expectation against brute-force integration") {
  for (double k : {-3.0, -0.2, 0.0, 0.05, 0.7, 4.0}) {
    // Midpoint rule on a wide grid as an independent reference.
    double ref = 0.0;
    const double h = 1e-4;
    for (double z = -12 + h / 2; z < 12; z += h) {
      const double f = std::clamp(1.0 / (1.0 + std::exp(-k * z * z)), 0.1, 0.9);
      ref += f * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) * h;
    }
    CHECK(expected_clipped_sigmoid(k, 0.1, 0.9) == doctest::Approx(ref).epsilon(1e-7));
  }
}

TEST_CASE("simulate: consistency, clipping, determinism") {
  for (auto variant : {DgpVariant::kCpt, DgpVariant::kViolated, DgpVariant::kImbalanced, DgpVariant::kShifted}) {
    DgpConfig c;
    c.variant = variant;
    c.n = 2000;
    c.seed = 12;
    const SimulatedPanel a = simulate(c);
    const SimulatedPanel b = simulate(c);
    CHECK(a.panel == b.panel);
    const double lo = variant == DgpVariant::kImbalanced ? 0.01 : 0.1;
    const double hi = variant == DgpVariant::kImbalanced ? 0.09 : 0.9;
    CHECK(a.p.minCoeff() >= lo);
    CHECK(a.p.maxCoeff() <= hi + 1e-15);
    const TwoPeriodView v = a.view();
    for (Eigen::Index i = 0; i < a.d.size(); ++i) {
      const double y1 = a.d(i) * a.y_post1(i) + (1 - a.d(i)) * a.y_post0(i);
      CHECK(a.panel.unit(static_cast<std::size_t>(i)).outcomes[1] == y1);
      CHECK(v.d(i) == a.d(i));
    }
  }
  DgpConfig h;
  h.variant = DgpVariant::kHighDim;
  h.n = 10;
  CHECK(simulate(h).panel.num_covariates() == 100);
}

TEST_CASE("cpt trend oracle is the control-group regression") {
  DgpConfig c;
  c.n = 3000;
  c.seed = 4;
  c.noise_sd = 0.0;
  const SimulatedPanel s = simulate(c);
  const TwoPeriodView v = s.view();
  for (Eigen::Index i = 0; i < v.s.size(); ++i)
    if (v.d(i) == 0.0) CHECK(v.s(i) == doctest::Approx(s.g0(i)).epsilon(1e-12));
}

TEST_CASE("mean assignment probability matches the quadrature oracle") {
  DgpConfig c;
  c.n = 100000;
  c.seed = 21;
  const SimulatedPanel s = simulate(c);
  CHECK(std::abs(s.p.mean() - s.pi0.mean()) < 0.01);

  DgpConfig big = c;
  big.n = 200000;
  const SimulatedPanel t = simulate(big);
  LearnerSpec spec;
  spec.kind = LearnerKind::kLogistic;
  const Vector fitted = fit_propensity(t.panel.covariate_matrix(), t.d, spec).predict(t.panel.covariate_matrix(), 1e-6);
  CHECK(std::abs(fitted.mean() - t.pi0.mean()) < 0.01);
}

TEST_CASE("frozen coefficients") {
  DgpConfig c;
  c.seed = 1;
  c.coefficient_seed = 99;
  const DgpCoefficients a = DgpCoefficients::draw(c);
  c.seed = 2;
  const DgpCoefficients b = DgpCoefficients::draw(c);
  CHECK(a.beta_d == b.beta_d);
  CHECK(a.keep == b.keep);
  CHECK(std::count(a.keep.begin(), a.keep.end(), 0) == 10);
  c.d_w = 3;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("semi-synthetic recipe") {
  const SemiSynthConfig r = SemiSynthConfig::default_recipe();
  CsvTable base;
  base.header = {"region3", "region4", "lavg_pay", "lpop", "years_after", "lemp"};
  base.rows = {{"1", "0", "10.2", "4", "1", "5.0"}, {"0", "1", "9.8", "9", "2", "4.0"}, {"0", "0", "10.5", "6.25", "0", "6.0"}};
  CHECK(r.effect.eval(base, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(r.score.eval(base, 0) == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(r.trend.eval(base, 1) == doctest::Approx(0.98 + 0.2 + 4 + std::sqrt(9.8) * 9).epsilon(1e-12));

  const SimulatedPanel a = semisynthetic(base, r, 5);
  const SimulatedPanel b = semisynthetic(base, r, 5);
  CHECK(a.panel == b.panel);
  CHECK(a.panel.num_units() == 10000);

  SemiSynthConfig flat = r;
  flat.trend = RecipeFunction{};
  flat.effect = RecipeFunction{};
  flat.n = 50;
  const SimulatedPanel f = semisynthetic(base, flat, 1);
  for (const auto& u : f.panel.units()) CHECK(u.outcomes[1] == u.outcomes[0]);

  CsvTable missing = base;
  missing.header[3] = "population";
  CHECK_THROWS_AS(semisynthetic(missing, r, 1), Error);
}

TEST_CASE("IV generator") {
  IvConfig c;
  c.n = 2000;
  c.complier_rate = 1.0;
  c.always_rate = 0.0;
  const SimulatedIv s = simulate_iv(c);
  for (Eigen::Index i = 0; i < s.view.z.size(); ++i) CHECK(s.view.dd(i) == s.view.z(i));
  IvConfig bad = c;
  bad.complier_rate = 1.2;
  CHECK_THROWS_AS(simulate_iv(bad), Error);
  bad.complier_rate = 0.7;
  bad.always_rate = 0.5;
  CHECK_THROWS_AS(simulate_iv(bad), Error);
}
