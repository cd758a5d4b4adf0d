#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "didcatt/error.hpp"
#include "didcatt/learners.hpp"

using namespace didcatt;

namespace {

Matrix normal_matrix(int n, int p, Rng& rng) {
  Matrix x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = standard_normal(rng);
  return x;
}

}  // namespace

TEST_CASE("ridge at zero penalty interpolates an exactly determined system") {
  Matrix x(2, 1);
  x << 0.0, 1.0;
  Vector y(2);
  y << 1.0, 2.0;
  LearnerSpec spec;
  spec.kind = LearnerKind::kRidge;
  const RegressionModel m = fit_regression(x, y, spec);
  const Vector p = m.predict(x);
  CHECK(p(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(2.0).epsilon(1e-12));

  Matrix sing(3, 2);
  sing << 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS(fit_regression(sing, Vector::Ones(3), spec), Error);
}

TEST_CASE("ridge matches a direct least-squares oracle") {
  Rng rng(3);
  const int n = 500;
  const Matrix x = normal_matrix(n, 2, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = 3 * x(i, 0) - 2 * x(i, 1) + 0.01 * standard_normal(rng);
  Matrix a(n, 3);
  a.col(0).setOnes();
  a.rightCols(2) = x;
  const Vector oracle = a.householderQr().solve(y);

  const auto [b0, b] = fit_ridge(x, y, 0.0).raw_coefficients();
  CHECK(std::abs(b0 - oracle(0)) < 1e-8);
  CHECK(std::abs(b(0) - oracle(1)) < 1e-8);
  CHECK(std::abs(b(1) - oracle(2)) < 1e-8);

  LearnerSpec spec;
  spec.lambda = 1e-6;
  const auto [c0, c] = fit_regression(x, y, spec).linear().raw_coefficients();
  CHECK(std::abs(c(0) - 3.0) < 0.05);
  CHECK(std::abs(c(1) + 2.0) < 0.05);
}

TEST_CASE("non-finite labels are rejected") {
  Matrix x = Matrix::Identity(3, 1);
  Vector y(3);
  y << 1.0, NAN, 2.0;
  CHECK_THROWS_AS(fit_regression(x, y, LearnerSpec{}), Error);
}

TEST_CASE("lasso full shrinkage and KKT") {
  Rng rng(5);
  const int n = 300;
  const Matrix x = normal_matrix(n, 6, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = 2 * x(i, 0) + 0.3 * x(i, 1) + standard_normal(rng);

  const LinearPredictor big = fit_lasso(x, y, 1e6);
  CHECK(big.coef.cwiseAbs().maxCoeff() == 0.0);
  CHECK(big.intercept == doctest::Approx(y.mean()));

  const double lam = 0.1;
  const LinearPredictor m = fit_lasso(x, y, lam, 1e-12);
  const Matrix z = (x.rowwise() - m.center.transpose()).array().rowwise() / m.scale.transpose().array();
  const Vector r = y - m.predict(x);
  int zeros = 0;
  for (int j = 0; j < 6; ++j) {
    const double grad = z.col(j).dot(r) / n;
    if (m.coef(j) == 0.0) {
      ++zeros;
      CHECK(std::abs(grad) <= lam + 1e-8);
    } else {
      CHECK(grad == doctest::Approx(lam * (m.coef(j) > 0 ? 1 : -1)).epsilon(1e-6));
    }
  }
  CHECK(zeros > 0);
  CHECK(m.coef(0) > 0);
}

TEST_CASE("lasso with CV picks a grid value") {
  Rng rng(6);
  const int n = 200;
  const Matrix x = normal_matrix(n, 3, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = x(i, 0) + 0.5 * standard_normal(rng);
  LearnerSpec spec;
  spec.kind = LearnerKind::kLasso;
  spec.cv_folds = 5;
  spec.lambda_grid = {1e-3, 1e-2, 1e-1, 10.0};
  const RegressionModel m = fit_regression(x, y, spec);
  CHECK(m.lambda() < 10.0);
  const auto losses = cv_losses(x, y, spec);
  CHECK(losses.size() == 4);
  CHECK(losses[3] > losses[0]);
  spec.lambda_grid.clear();
  CHECK_THROWS_AS(fit_regression(x, y, spec), Error);
}

TEST_CASE("spec validation") {
  LearnerSpec s;
  s.lambda = -1;
  CHECK_THROWS_AS(s.validate(), Error);
  s = LearnerSpec{};
  s.max_depth = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = LearnerSpec{};
  s.rounds = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = LearnerSpec{};
  s.learning_rate = 1.5;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK(learner_kind_from_string("gbt_logistic") == LearnerKind::kGbtLogistic);
  CHECK_THROWS_AS(learner_kind_from_string("forest"), Error);
}

TEST_CASE("propensity contracts") {
  Rng rng(7);
  LearnerSpec spec;
  spec.kind = LearnerKind::kLogistic;
  SUBCASE("single class") {
    const Matrix x = normal_matrix(20, 2, rng);
    CHECK_THROWS_AS(fit_propensity(x, Vector::Ones(20), spec), Error);
  }
  SUBCASE("independent balanced labels") {
    const int n = 2000;
    const Matrix x = normal_matrix(n, 1, rng);
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = i % 2;
    const PropensityModel m = fit_propensity(x, d, spec);
    CHECK(m.converged());
    const Vector p = m.predict(x, 0.01);
    CHECK(std::abs(p.mean() - 0.5) < 0.02);
    CHECK(std::sqrt((p.array() - 0.5).square().mean()) < 0.02);
  }
  SUBCASE("separable data stays clipped") {
    const int n = 100;
    const Matrix x = normal_matrix(n, 1, rng);
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = x(i, 0) > 0 ? 1.0 : 0.0;
    const PropensityModel m = fit_propensity(x, d, spec);
    const Vector p = m.predict(x, 0.01);
    CHECK(p.minCoeff() >= 0.01);
    CHECK(p.maxCoeff() <= 0.99);
  }
  SUBCASE("logistic recovers coefficients") {
    const int n = 20000;
    const Matrix x = normal_matrix(n, 2, rng);
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = uniform01(rng) < sigmoid(0.5 + x(i, 0) - 0.5 * x(i, 1)) ? 1.0 : 0.0;
    const auto [b0, b] = fit_propensity(x, d, spec).linear().raw_coefficients();
    CHECK(std::abs(b0 - 0.5) < 0.08);
    CHECK(std::abs(b(0) - 1.0) < 0.08);
    CHECK(std::abs(b(1) + 0.5) < 0.08);
  }
  SUBCASE("gbt logistic") {
    const int n = 1000;
    const Matrix x = normal_matrix(n, 2, rng);
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = uniform01(rng) < (x(i, 0) > 0 ? 0.8 : 0.2) ? 1.0 : 0.0;
    LearnerSpec g;
    g.kind = LearnerKind::kGbtLogistic;
    g.max_depth = 2;
    g.rounds = 50;
    const Vector p = fit_propensity(x, d, g).predict(x, 0.01);
    double hi = 0, lo = 0;
    int nh = 0, nl = 0;
    for (int i = 0; i < n; ++i) (x(i, 0) > 0 ? (hi += p(i), ++nh) : (lo += p(i), ++nl));
    CHECK(hi / nh > 0.7);
    CHECK(lo / nl < 0.3);
  }
}
