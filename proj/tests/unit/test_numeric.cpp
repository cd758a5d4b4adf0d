#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"
#include "didcatt/gbt.hpp"
#include "didcatt/numeric.hpp"

using namespace didcatt;

TEST_CASE("pairwise sum and moments") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i + 1);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(mean(v) == doctest::Approx(500.5));
  std::vector<double> w = {1.0, 2.0, 3.0, 4.0};
  CHECK(sample_sd(w) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(sample_sd(std::vector<double>{7.0}) == 0.0);
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(logit(sigmoid(1.25)) == doctest::Approx(1.25));
}

TEST_CASE("derived seeds are keyed and deterministic") {
  CHECK(derive_seed(7, "a", 0) == derive_seed(7, "a", 0));
  CHECK(derive_seed(7, "a", 0) != derive_seed(7, "b", 0));
  CHECK(derive_seed(7, "a", 0) != derive_seed(7, "a", 1));
  CHECK(derive_seed(7, "a", 0) != derive_seed(8, "a", 0));
}

TEST_CASE("rng helpers") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(standard_normal(a) == standard_normal(b));
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(r);
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
  std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
  Rng q(3);
  shuffle_indices(idx, q);
  std::vector<std::size_t> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("csv round trip") {
  const std::string text = "a,b,c\r\n1,\"x,y\",3\n\n4,\"q\"\"r\",6\n";
  const CsvTable t = parse_csv(text);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,y");
  CHECK(t.rows[1][1] == "q\"r");
  const CsvTable back = parse_csv(to_csv_string(t));
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), Error);
  for (double x : {0.1, -1e-300, 3.0, 1.0 / 3.0, 12345678.9})
    CHECK(*parse_double(format_double(x)) == x);
  CHECK_FALSE(parse_double("abc").has_value());
  CHECK(*parse_double(" 2.5 ") == 2.5);
}

TEST_CASE("gbt squared loss is non-increasing and round-trips") {
  Rng rng(1);
  const int n = 400;
  Matrix x(n, 3);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = standard_normal(rng);
    y(i) = (x(i, 0) > 0 ? 1.0 : -1.0) + 0.5 * x(i, 1) * x(i, 1) + 0.1 * standard_normal(rng);
  }
  GbtObjective obj;
  obj.grad_hess = [&](std::size_t i, double f) { return std::pair{f - y(static_cast<Eigen::Index>(i)), 1.0}; };
  obj.loss = [&](std::size_t i, double f) {
    const double r = f - y(static_cast<Eigen::Index>(i));
    return 0.5 * r * r;
  };
  GbtParams p;
  p.rounds = 50;
  const GbtFit fit = fit_gbt(x, obj, y.mean(), p);
  REQUIRE(fit.loss_trace.size() == 51);
  for (std::size_t r = 1; r < fit.loss_trace.size(); ++r) CHECK(fit.loss_trace[r] <= fit.loss_trace[r - 1] + 1e-12);
  CHECK(fit.loss_trace.back() < 0.25 * fit.loss_trace.front());

  std::stringstream ss;
  fit.model.write(ss);
  const GbtEnsemble back = GbtEnsemble::read(ss);
  const Vector a = fit.model.predict(x), b = back.predict(x);
  for (int i = 0; i < n; ++i) CHECK(a(i) == b(i));
}

TEST_CASE("gbt early stopping truncates") {
  Rng rng(2);
  const int n = 300;
  Matrix x(n, 1);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = standard_normal(rng);
    y(i) = standard_normal(rng);
  }
  GbtObjective obj;
  obj.grad_hess = [&](std::size_t i, double f) { return std::pair{f - y(static_cast<Eigen::Index>(i)), 1.0}; };
  obj.loss = [&](std::size_t i, double f) { return 0.5 * (f - y(static_cast<Eigen::Index>(i))) * (f - y(static_cast<Eigen::Index>(i))); };
  GbtParams p;
  p.rounds = 200;
  p.max_depth = 4;
  p.early_stop_patience = 5;
  const GbtFit fit = fit_gbt(x, obj, 0.0, p);
  CHECK(fit.model.trees().size() < 200);
  CHECK_THROWS_AS(fit_gbt(x, obj, 0.0, GbtParams{.max_depth = 0}), Error);
}
