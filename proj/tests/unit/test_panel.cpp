#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"
#include "didcatt/panel.hpp"

using namespace didcatt;

namespace {

PanelSchema schema_w(std::vector<std::string> cov) {
  PanelSchema s;
  s.covariates = std::move(cov);
  return s;
}

UnitRecord unit(std::string id, std::vector<double> y, int cohort, std::vector<double> w) {
  UnitRecord u;
  u.id = std::move(id);
  u.outcomes = std::move(y);
  u.cohort = cohort;
  u.covariates = std::move(w);
  return u;
}

std::vector<std::string> labels(int t) {
  std::vector<std::string> out;
  for (int i = 0; i < t; ++i) out.push_back(std::to_string(i));
  return out;
}

}  // namespace

TEST_CASE("smallest balanced panel") {
  const std::string text =
      "unit,period,outcome,cohort,w1\n"
      "a,0,1.0,1,0.5\n"
      "a,1,3.0,1,0.5\n"
      "b,0,2.0,never,-1\n"
      "b,1,2.5,never,-1\n";
  const PanelDataset p = parse_panel_csv(text, schema_w({"w1"}));
  CHECK(p.num_units() == 2);
  CHECK(p.num_periods() == 2);
  CHECK(p.unit(0).cohort == 1);
  CHECK(p.unit(1).cohort == kNeverTreated);
}

TEST_CASE("load errors") {
  const auto sch = schema_w({"w1"});
  CHECK_THROWS_AS(parse_panel_csv("unit,period,outcome,cohort,w1\na,0,1,1,0\na,1,1,1,0\nb,0,1,never,0\n", sch), Error);
  CHECK_THROWS_AS(parse_panel_csv("unit,period,outcome,cohort\na,0,1,1\n", sch), Error);
  CHECK_THROWS_AS(parse_panel_csv("unit,period,outcome,cohort,w1\na,0,1,1,x\na,1,1,1,x\n", sch), Error);
  CHECK_THROWS_AS(parse_panel_csv("unit,period,outcome,cohort,w1\na,0,1,0,1\na,1,1,0,1\n", sch), Error);
  try {
    parse_panel_csv("unit,period,outcome,cohort,w1\na,0,1,1,0\nb,0,1,never,0\nb,1,1,never,0\n", sch);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.module() == "panel_data");
    CHECK(std::string(e.what()).find("lacks period") != std::string::npos);
  }
}

TEST_CASE("shuffled row order gives the same dataset") {
  CsvTable t;
  t.header = {"unit", "period", "outcome", "cohort", "w1", "w2"};
  for (int u = 0; u < 10; ++u)
    for (int p = 0; p < 3; ++p)
      t.rows.push_back({"u" + std::to_string(u), std::to_string(p), format_double(u * 0.7 + p * 1.3),
                        u % 3 == 0 ? "never" : std::to_string(1 + u % 2), format_double(u * 0.1),
                        format_double(-u * 0.2)});
  const std::string sorted = to_csv_string(t);
  std::vector<std::size_t> idx(t.rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(9);
  shuffle_indices(idx, rng);
  CsvTable shuffled = t;
  for (std::size_t i = 0; i < idx.size(); ++i) shuffled.rows[i] = t.rows[idx[i]];
  const auto sch = schema_w({"w1", "w2"});
  const PanelDataset a = parse_panel_csv(sorted, sch);
  const PanelDataset b = parse_panel_csv(to_csv_string(shuffled), sch);
  CHECK(a == b);
  const PanelDataset c = parse_panel_csv(panel_to_csv(a, sch), sch);
  CHECK(a == c);
}

TEST_CASE("two_period transforms") {
  PanelDataset p({unit("a", {1, 3}, 1, {7.0, 8.0}), unit("b", {2, 2}, kNeverTreated, {1.0, 2.0})}, labels(2),
                 {"w1", "w2"});
  const TwoPeriodView pt = two_period(p, 0, 1, {1}, Transform::kParallelTrends);
  CHECK(pt.s(0) == 2.0);
  CHECK(pt.s(1) == 0.0);
  CHECK(pt.d(0) == 1.0);
  CHECK(pt.d(1) == 0.0);
  CHECK(pt.w.cols() == 2);
  CHECK(pt.x()(0, 0) == 8.0);
  const TwoPeriodView lag = two_period(p, 0, 1, {1}, Transform::kLaggedOutcome);
  CHECK(lag.s(0) == 3.0);
  REQUIRE(lag.w.cols() == 3);
  CHECK(lag.w(0, 2) == 1.0);
  CHECK(lag.x_cols == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(two_period(p, 0, 1, {2}, Transform::kParallelTrends), Error);

  PanelDataset flat({unit("a", {1, 1}, 1, {0.0}), unit("b", {4, 4}, kNeverTreated, {0.0})}, labels(2), {"w"});
  const TwoPeriodView z = two_period(flat, 0, 1, {0}, Transform::kParallelTrends);
  CHECK(z.s.cwiseAbs().maxCoeff() == 0.0);

  PanelDataset three({unit("a", {0, 1, 2}, 1, {0.0}), unit("b", {0, 0, 0}, kNeverTreated, {0.0})}, labels(3), {"w"});
  CHECK_THROWS_AS(two_period(three, 0, 2, {0}, Transform::kParallelTrends), Error);
}

TEST_CASE("event study expansion") {
  SUBCASE("single treated unit") {
    PanelDataset p({unit("a", {0, 1, 2, 3}, 1, {1.0}), unit("b", {0, 0, 0, 0}, kNeverTreated, {1.0})}, labels(4),
                   {"w"});
    const TwoPeriodView v = event_study_expand(p, {0}, false);
    std::set<double> deltas;
    int treated = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v.d(static_cast<Eigen::Index>(i)) == 1.0) {
        ++treated;
        deltas.insert(v.w(static_cast<Eigen::Index>(i), v.w.cols() - 1));
      }
    CHECK(treated == 3);
    CHECK(deltas == std::set<double>{0.0, 1.0, 2.0});
    PanelDataset late({unit("a", {0, 1, 2, 3}, 2, {1.0}), unit("b", {0, 0, 0, 0}, kNeverTreated, {1.0})}, labels(4),
                      {"w"});
    CHECK(event_study_expand(late, {0}, false).size() == 2 + 2);
  }
  SUBCASE("degenerate two-period case") {
    PanelDataset p({unit("a", {1, 4}, 1, {0.3}), unit("b", {2, 1}, kNeverTreated, {0.2}),
                    unit("c", {0, 0}, kNeverTreated, {0.1})},
                   labels(2), {"w"});
    const TwoPeriodView e = event_study_expand(p, {0}, false);
    const TwoPeriodView t = two_period(p, 0, 1, {0}, Transform::kParallelTrends);
    REQUIRE(e.size() == t.size());
    for (Eigen::Index i = 0; i < t.s.size(); ++i) {
      CHECK(e.s(i) == t.s(i));
      CHECK(e.d(i) == t.d(i));
    }
  }
  SUBCASE("two cohorts") {
    PanelDataset p({unit("a", {0, 1, 2}, 1, {0.0}), unit("b", {0, 0, 5}, 2, {0.0}),
                    unit("c", {0, 1, 1}, kNeverTreated, {0.0})},
                   labels(3), {"w"});
    const TwoPeriodView v = event_study_expand(p, {0}, true);
    CHECK(v.size() == 6);
    CHECK((v.d.array() == 1.0).count() == 3);
    CHECK(v.x_cols.size() == 3);
    CHECK(v.w_names.back() == "cohort");
  }
  SUBCASE("errors") {
    PanelDataset none({unit("a", {0, 1}, 1, {0.0})}, labels(2), {"w"});
    CHECK_THROWS_AS(event_study_expand(none, {0}, false), Error);
    PanelDataset untreated({unit("a", {0, 1}, kNeverTreated, {0.0})}, labels(2), {"w"});
    CHECK_THROWS_AS(event_study_expand(untreated, {0}, false), Error);
  }
}

TEST_CASE("fold assignment") {
  const std::vector<double> d = {1, 1, 0, 0};
  const FoldAssignment f = assign_folds(4, 2, 3, d);
  for (int k = 0; k < 2; ++k) {
    const auto rows = f.rows_in(k);
    REQUIRE(rows.size() == 2);
    CHECK(d[rows[0]] + d[rows[1]] == 1.0);
  }
  CHECK(assign_folds(4, 2, 3, d).fold_of == f.fold_of);
  CHECK_THROWS_AS(assign_folds(4, 5, 3, d), Error);
  CHECK_THROWS_AS(assign_folds(4, 1, 3, d), Error);
  CHECK_THROWS_AS(assign_folds(4, 3, 3, d, true), Error);

  Rng rng(4);
  std::vector<double> b(100);
  for (auto& x : b) x = uniform01(rng) < 0.3 ? 1.0 : 0.0;
  const double n1 = std::accumulate(b.begin(), b.end(), 0.0);
  const FoldAssignment g = assign_folds(100, 5, 17, b);
  for (int k = 0; k < 5; ++k) {
    double t = 0.0;
    for (auto i : g.rows_in(k)) t += b[i];
    CHECK(std::abs(t - n1 / 5) <= 1.0);
  }
}
