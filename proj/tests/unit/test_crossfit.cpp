#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "didcatt/crossfit.hpp"
#include "didcatt/error.hpp"

using namespace didcatt;

namespace {

TwoPeriodView random_view(int n, int p, double p_treat, std::uint64_t seed) {
  Rng rng(seed);
  TwoPeriodView v;
  v.w.resize(n, p);
  v.d.resize(n);
  v.s.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) v.w(i, j) = standard_normal(rng);
    v.d(i) = uniform01(rng) < p_treat ? 1.0 : 0.0;
    v.s(i) = v.w(i, 0) - 0.5 * v.w(i, 1) + 0.3 * standard_normal(rng) + v.d(i);
    v.source_unit.push_back("u" + std::to_string(i));
  }
  for (int j = 0; j < p; ++j) v.w_names.push_back("w" + std::to_string(j));
  v.x_cols = {0};
  return v;
}

LearnerSpec ridge() {
  LearnerSpec s;
  s.kind = LearnerKind::kRidge;
  s.lambda = 1.0;
  return s;
}

LearnerSpec logistic() {
  LearnerSpec s;
  s.kind = LearnerKind::kLogistic;
  return s;
}

}  // namespace

TEST_CASE("constant control outcome gives constant g") {
  TwoPeriodView v = random_view(200, 3, 0.4, 1);
  for (Eigen::Index i = 0; i < v.s.size(); ++i)
    if (v.d(i) == 0.0) v.s(i) = 5.0;
  const NuisanceEstimates e = cross_fit(v, 3, ridge(), logistic(), 0.01, 7);
  for (Eigen::Index i = 0; i < e.g_hat.size(); ++i) CHECK(e.g_hat(i) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("propensity of an independent assignment") {
  const TwoPeriodView v = random_view(5000, 3, 0.3, 2);
  const NuisanceEstimates e = cross_fit(v, 5, ridge(), logistic(), 0.01, 3);
  CHECK(std::abs(e.pi_hat.mean() - 0.3) < 0.02);
}

TEST_CASE("determinism, clipping and alignment") {
  const TwoPeriodView v = random_view(300, 4, 0.5, 3);
  LearnerSpec g;
  g.kind = LearnerKind::kGbtSquared;
  g.rounds = 20;
  g.seed = 11;
  const NuisanceEstimates a = cross_fit(v, 2, g, logistic(), 0.2, 5);
  const NuisanceEstimates b = cross_fit(v, 2, g, logistic(), 0.2, 5);
  CHECK(a.fold.fold_of == b.fold.fold_of);
  for (Eigen::Index i = 0; i < a.g_hat.size(); ++i) {
    CHECK(a.g_hat(i) == b.g_hat(i));
    CHECK(a.pi_hat(i) == b.pi_hat(i));
  }
  CHECK(a.pi_hat.minCoeff() >= 0.2);
  CHECK(a.pi_hat.maxCoeff() <= 0.8);
  a.validate(v.size());
  CHECK(a.to_csv().rows.size() == v.size());
}

TEST_CASE("out-of-fold purity against refits") {
  const TwoPeriodView v = random_view(240, 3, 0.5, 4);
  const NuisanceEstimates e = cross_fit(v, 4, ridge(), logistic(), 0.01, 9);
  for (int f = 0; f < 4; ++f) {
    std::vector<std::size_t> train;
    for (auto i : e.fold.rows_not_in(f))
      if (v.d(static_cast<Eigen::Index>(i)) == 0.0) train.push_back(i);
    LearnerSpec s = ridge();
    s.seed = derive_seed(s.seed, "fold", static_cast<std::uint64_t>(f));
    const RegressionModel m = fit_regression(select_rows(v.w, train), select_rows(v.s, train), s);
    const auto test = e.fold.rows_in(f);
    const Vector p = m.predict(select_rows(v.w, test));
    for (std::size_t j = 0; j < test.size(); ++j) CHECK(e.g_hat(static_cast<Eigen::Index>(test[j])) == p(static_cast<Eigen::Index>(j)));
  }
}

TEST_CASE("treated outcomes never reach the g learner") {
  const TwoPeriodView v = random_view(300, 3, 0.5, 5);
  TwoPeriodView poisoned = v;
  for (Eigen::Index i = 0; i < v.s.size(); ++i)
    if (v.d(i) == 1.0) poisoned.s(i) = 1e12;
  const NuisanceEstimates a = cross_fit(v, 3, ridge(), logistic(), 0.01, 2);
  const NuisanceEstimates b = cross_fit(poisoned, 3, ridge(), logistic(), 0.01, 2);
  for (Eigen::Index i = 0; i < a.g_hat.size(); ++i) CHECK(a.g_hat(i) == b.g_hat(i));
}

TEST_CASE("event-study rows of one unit share a fold") {
  TwoPeriodView v = random_view(60, 2, 0.5, 6);
  for (std::size_t i = 0; i < v.size(); ++i) v.source_unit[i] = "u" + std::to_string(i / 3);
  const FoldAssignment f = assign_view_folds(v, 4, 1);
  for (std::size_t i = 0; i < v.size(); i += 3) {
    CHECK(f.fold_of[i] == f.fold_of[i + 1]);
    CHECK(f.fold_of[i] == f.fold_of[i + 2]);
  }
}

TEST_CASE("cross-fit errors") {
  const TwoPeriodView v = random_view(50, 2, 0.5, 7);
  const FoldAssignment folds = assign_folds(50, 2, 1, std::span<const double>(v.d.data(), 50));
  std::vector<char> none(50, 0);
  CHECK_THROWS_AS(cross_fit_regression(v.w, v.s, none, folds, ridge()), Error);
  CHECK_THROWS_AS(cross_fit(v, 1, ridge(), logistic(), 0.01, 1), Error);
  CHECK_THROWS_AS(cross_fit(v, 2, ridge(), logistic(), 0.6, 1), Error);
  TwoPeriodView all_treated = v;
  all_treated.d.setOnes();
  CHECK_THROWS_AS(cross_fit(all_treated, 2, ridge(), logistic(), 0.01, 1), Error);
  LearnerSpec bad = ridge();
  bad.lambda = 0.0;
  TwoPeriodView collinear = v;
  collinear.w.col(1) = 2.0 * collinear.w.col(0);
  try {
    cross_fit(collinear, 2, bad, logistic(), 0.01, 1);
    FAIL("expected a singular-system error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fold ") == 0);
  }
}
