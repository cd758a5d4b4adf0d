#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "didcatt/catt.hpp"
#include "didcatt/dgp.hpp"
#include "didcatt/error.hpp"

using namespace didcatt;

namespace {

PseudoOutcome make_pseudo(const std::vector<double>& y, const std::vector<double>& d, int p = 0) {
  PseudoOutcome po;
  po.y_hat = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  po.d = Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
  po.x = Matrix::Zero(static_cast<Eigen::Index>(y.size()), p);
  return po;
}

TwoPeriodView tiny_view(std::vector<double> d, std::vector<double> s) {
  TwoPeriodView v;
  const auto n = static_cast<Eigen::Index>(d.size());
  v.w = Matrix::Zero(n, 1);
  v.d = Eigen::Map<Vector>(d.data(), n);
  v.s = Eigen::Map<Vector>(s.data(), n);
  for (Eigen::Index i = 0; i < n; ++i) v.source_unit.push_back(std::to_string(i));
  v.w_names = {"w"};
  return v;
}

LearnerSpec linear() {
  LearnerSpec s;
  s.kind = LearnerKind::kLinear;
  return s;
}

// Random synthetic pseudo-outcomes with theta(x) = 1 + 2 x1 - x2 on treated rows.
PseudoOutcome synthetic(int n, std::uint64_t seed) {
  Rng rng(seed);
  PseudoOutcome po;
  po.x.resize(n, 2);
  po.y_hat.resize(n);
  po.d.resize(n);
  for (int i = 0; i < n; ++i) {
    po.x(i, 0) = standard_normal(rng);
    po.x(i, 1) = standard_normal(rng);
    const double th = 1 + 2 * po.x(i, 0) - po.x(i, 1);
    po.d(i) = uniform01(rng) < 0.4 ? 1.0 : 0.0;
    po.y_hat(i) = po.d(i) == 1.0 ? th + standard_normal(rng) : 0.5 * standard_normal(rng);
  }
  po.x_names = {"a", "b"};
  po.x_cols = {0, 1};
  return po;
}

}  // namespace

TEST_CASE("pseudo-outcome examples") {
  const TwoPeriodView v = tiny_view({1, 0}, {3, 3});
  Vector g(2), pi(2);
  g << 1, 1;
  pi << 0.4, 0.5;
  const PseudoOutcome po = pseudo_outcome(v, NuisanceEstimates::from_arrays(g, pi, 0.01));
  CHECK(po.y_hat(0) == 2.0);
  CHECK(po.y_hat(1) == -2.0);
  CHECK_THROWS_AS(pseudo_outcome(v, NuisanceEstimates::from_arrays(Vector::Ones(3), Vector::Constant(3, 0.5), 0.01)),
                  Error);
}

TEST_CASE("pseudo-outcome matches a scalar second implementation") {
  Rng rng(3);
  std::vector<double> d(10), s(10);
  Vector g(10), pi(10);
  for (int i = 0; i < 10; ++i) {
    d[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1.0 : 0.0;
    s[static_cast<std::size_t>(i)] = standard_normal(rng);
    g(i) = standard_normal(rng);
    pi(i) = 0.05 + 0.9 * uniform01(rng);
  }
  const TwoPeriodView v = tiny_view(d, s);
  const PseudoOutcome po = pseudo_outcome(v, NuisanceEstimates::from_arrays(g, pi, 0.01));
  for (int i = 0; i < 10; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double expected = d[k] == 1.0 ? s[k] - g(i) : -(pi(i) / (1.0 - pi(i))) * (s[k] - g(i));
    CHECK(po.y_hat(i) == expected);
  }
}

TEST_CASE("dr_loss examples") {
  const PseudoOutcome po = make_pseudo({1.5, -0.5, 2.0, 0.25, -1.0, 3.0, 0.0}, {1, 0, 1, 1, 0, 0, 1});
  CHECK(dr_loss(Vector::Zero(7), po) == 0.0);
  const double c = 1.7;
  const double md = 4.0 / 7.0, my = (1.5 - 0.5 + 2.0 + 0.25 - 1.0 + 3.0) / 7.0;
  CHECK(dr_loss(Vector::Constant(7, c), po) == doctest::Approx(md * c * c - 2 * my * c).epsilon(1e-14));
  Vector th(7);
  th << 0.3, -1.2, 2.2, 0.0, 0.7, -0.4, 1.1;
  double hand = 0.0;
  for (int i = 0; i < 7; ++i) hand += po.d(i) * th(i) * th(i) - 2 * po.y_hat(i) * th(i);
  CHECK(dr_loss(th, po) == doctest::Approx(hand / 7).epsilon(1e-14));
  CHECK_THROWS_AS(dr_loss(Vector::Zero(6), po), Error);
}

TEST_CASE("att examples") {
  CHECK(att(make_pseudo({2, -2}, {1, 0})) == 0.0);
  CHECK_THROWS_AS(att(make_pseudo({2, -2}, {0, 0})), Error);
  const PseudoOutcome po = synthetic(500, 1);
  PseudoOutcome none = po;
  none.x = Matrix::Zero(po.x.rows(), 0);
  none.x_names.clear();
  none.x_cols.clear();
  const CattModel m = fit_dr_catt(none, linear());
  CHECK(m.beta(0) == att(po));
}

TEST_CASE("linear final stage is the exact minimizer") {
  const PseudoOutcome po = synthetic(2000, 2);
  const CattModel m = fit_dr_catt(po, linear(), 1e-8);
  // Independent route: gradient descent on the empirical loss.
  const Matrix phi = feature_map(po.x, FeatureMap::kRaw);
  const auto n = static_cast<double>(po.size());
  Vector beta = Vector::Zero(3);
  for (int it = 0; it < 5000; ++it) {
    const Vector th = phi * beta;
    const Vector grad = phi.transpose() * (2.0 * (po.d.cwiseProduct(th) - po.y_hat)) / n;
    beta -= 0.5 * grad;
    if (grad.norm() < 1e-13) break;
  }
  for (int j = 0; j < 3; ++j) CHECK(std::abs(m.beta(j) - beta(j)) < 1e-4);
  CHECK(std::abs(m.beta(1) - 2.0) < 0.15);
  CHECK(m.training_loss == doctest::Approx(dr_loss(m.predict(po.x), po)).epsilon(1e-14));
}

TEST_CASE("loss is convex over the linear class") {
  const PseudoOutcome po = synthetic(300, 4);
  const Matrix phi = feature_map(po.x, FeatureMap::kQuadratic);
  Rng rng(8);
  for (int r = 0; r < 20; ++r) {
    Vector a(phi.cols()), b(phi.cols());
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      a(j) = 3 * standard_normal(rng);
      b(j) = 3 * standard_normal(rng);
    }
    const double la = dr_loss(phi * a, po), lb = dr_loss(phi * b, po), lm = dr_loss(phi * (0.5 * (a + b)), po);
    CHECK(lm <= 0.5 * (la + lb) + 1e-9);
  }
}

TEST_CASE("gbt final stage decreases the loss every round") {
  const PseudoOutcome po = synthetic(800, 5);
  LearnerSpec g;
  g.kind = LearnerKind::kGbt;
  g.rounds = 40;
  g.max_depth = 3;
  const CattModel m = fit_dr_catt(po, g);
  REQUIRE(m.loss_trace.size() == 41);
  for (std::size_t r = 1; r < m.loss_trace.size(); ++r) CHECK(m.loss_trace[r] <= m.loss_trace[r - 1] + 1e-12);
  CHECK(m.training_loss == doctest::Approx(m.loss_trace.back()).epsilon(1e-12));
}

TEST_CASE("singular final-stage system reports a penalty") {
  PseudoOutcome po = synthetic(100, 6);
  po.x.col(1) = po.x.col(0);
  try {
    fit_dr_catt(po, linear(), 0.0);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ridge_penalty") != std::string::npos);
  }
  LearnerSpec wrong;
  wrong.kind = LearnerKind::kRidge;
  CHECK_THROWS_AS(fit_dr_catt(po, wrong), Error);
}

TEST_CASE("predict, persistence and arity") {
  const PseudoOutcome po = synthetic(400, 7);
  CattModel zero = fit_dr_catt(po, linear());
  zero.beta.setZero();
  CHECK(zero.predict(po.x).cwiseAbs().maxCoeff() == 0.0);

  for (auto kind : {LearnerKind::kLinear, LearnerKind::kGbt}) {
    LearnerSpec s;
    s.kind = kind;
    s.rounds = 10;
    s.feature_map = FeatureMap::kQuadratic;
    const CattModel m = fit_dr_catt(po, s);
    std::stringstream ss;
    m.save(ss);
    const std::string text = ss.str();
    const CattModel back = CattModel::load(ss);
    CHECK(back.to_string() == text);
    const Vector a = m.predict(po.x), b = back.predict(po.x);
    for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(a(i) == b(i));
    CHECK(dr_loss(b, po) == back.training_loss);
    CHECK(back.x_names == po.x_names);
    CHECK_THROWS_AS(m.predict(Matrix::Zero(3, 5)), Error);
  }
  std::stringstream bad("not a model\n");
  CHECK_THROWS_AS(CattModel::load(bad), Error);
}

TEST_CASE("baselines on simulated data") {
  DgpConfig cfg;
  cfg.n = 4000;
  cfg.seed = 3;
  cfg.noise_sd = 0.0;
  const SimulatedPanel sim = simulate(cfg);
  TwoPeriodView v = sim.view();
  const NuisanceEstimates oracle = NuisanceEstimates::from_arrays(sim.g0, sim.pi0, 0.01);

  SUBCASE("OR with exact g recovers theta") {
    LearnerSpec g;
    g.kind = LearnerKind::kGbt;
    g.rounds = 300;
    g.max_depth = 4;
    g.learning_rate = 0.3;
    g.min_child_weight = 1.0;
    const CattModel m = fit_or_catt(v, oracle, g);
    const Vector pred = m.predict(v.x());
    double mse = 0.0, cnt = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
      if (v.d(i) == 1.0) {
        mse += (pred(i) - sim.theta(i)) * (pred(i) - sim.theta(i));
        cnt += 1;
      }
    CHECK(mse / cnt < 0.01);
  }
  SUBCASE("OR intercept-only is the treated mean residual") {
    TwoPeriodView v0 = v;
    v0.x_cols.clear();
    const CattModel m = fit_or_catt(v0, oracle, linear());
    double sum = 0.0, cnt = 0.0;
    for (Eigen::Index i = 0; i < v.s.size(); ++i)
      if (v.d(i) == 1.0) {
        sum += v.s(i) - sim.g0(i);
        cnt += 1;
      }
    CHECK(m.beta(0) == doctest::Approx(sum / cnt).epsilon(1e-12));
  }
  SUBCASE("CATE baselines agree with DR when trends are homogeneous") {
    // Treated-arm trend equals the control trend plus theta, so g1 = g0 + theta.
    const Vector g1 = sim.g0 + sim.theta;
    const PseudoOutcome po = pseudo_outcome(v, oracle);
    const CattModel dr = fit_dr_catt(po, linear());
    const CattModel cdr = fit_cate_dr(v, g1, oracle, linear());
    const CattModel cor = fit_cate_or(v, g1, oracle, linear());
    for (int j = 0; j < dr.beta.size(); ++j) {
      CHECK(std::abs(dr.beta(j) - cdr.beta(j)) < 0.05);
      CHECK(std::abs(cor.beta(j) - cdr.beta(j)) < 0.05);
    }
    CHECK(cdr.estimator == "cate_dr");
    const CattModel all = fit_cate_dr(v, g1, oracle, linear(), -1.0, CateDrRows::kAll);
    CHECK(all.metadata.back().second == "all");
  }
}

TEST_CASE("held-out model selection prefers the smaller class on ties") {
  const PseudoOutcome po = synthetic(1000, 9);
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < po.size(); ++i) (i % 2 ? te : tr).push_back(i);
  const PseudoOutcome a = po.subset(tr), b = po.subset(te);
  PseudoOutcome a0 = a;
  a0.x = Matrix::Zero(a.x.rows(), 0);
  std::vector<CattModel> c = {fit_dr_catt(a, linear()), fit_dr_catt(a, linear())};
  CHECK(select_by_heldout_loss(c, b) == 0);
  LearnerSpec q = linear();
  q.feature_map = FeatureMap::kQuadratic;
  c = {fit_dr_catt(a, linear()), fit_dr_catt(a, q)};
  const std::size_t pick = select_by_heldout_loss(c, b);
  CHECK(pick < 2);
}
