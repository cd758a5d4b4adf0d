#include "didcatt/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "didcatt/error.hpp"
#include "didcatt/parallel.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "nuisance";

void check_clip(double clip, const char* op) {
  if (!(clip > 0.0 && clip < 0.5)) throw Error(kModule, op, "clip must lie in (0, 0.5)");
}

LearnerSpec with_fold_seed(LearnerSpec spec, std::size_t fold) {
  spec.seed = derive_seed(spec.seed, "fold", fold);
  return spec;
}

[[noreturn]] void rethrow_with_fold(const Error& e, std::size_t fold, const char* op) {
  throw Error(e.module(), op, "fold " + std::to_string(fold) + ": " + e.what());
}

}  // namespace

void NuisanceEstimates::validate(std::size_t n) const {
  constexpr const char* op = "NuisanceEstimates";
  if (size() != n || static_cast<std::size_t>(pi_hat.size()) != n)
    throw Error(kModule, op, "nuisance arrays are not aligned with the view (" + std::to_string(size()) + " vs " +
                                 std::to_string(n) + " rows)");
  check_clip(clip, op);
  for (Eigen::Index i = 0; i < g_hat.size(); ++i) {
    if (!std::isfinite(g_hat(i))) throw Error(kModule, op, "non-finite g_hat at row " + std::to_string(i));
    if (!(pi_hat(i) >= clip && pi_hat(i) <= 1.0 - clip))
      throw Error(kModule, op, "pi_hat outside [clip, 1 - clip] at row " + std::to_string(i));
  }
}

CsvTable NuisanceEstimates::to_csv() const {
  CsvTable t;
  t.header = {"g_hat", "pi_hat", "fold"};
  for (Eigen::Index i = 0; i < g_hat.size(); ++i) {
    const auto fi = static_cast<std::size_t>(i);
    t.rows.push_back({format_double(g_hat(i)), format_double(pi_hat(i)),
                      fi < fold.fold_of.size() ? std::to_string(fold.fold_of[fi]) : ""});
  }
  return t;
}

NuisanceEstimates NuisanceEstimates::from_arrays(Vector g, const Vector& pi, double clip, FoldAssignment fold) {
  check_clip(clip, "from_arrays");
  if (g.size() != pi.size()) throw Error(kModule, "from_arrays", "g and pi lengths differ");
  NuisanceEstimates out;
  out.g_hat = std::move(g);
  out.pi_hat = pi.unaryExpr([clip](double p) { return std::clamp(p, clip, 1.0 - clip); });
  out.fold = std::move(fold);
  out.clip = clip;
  out.g_learner = "external";
  out.pi_learner = "external";
  return out;
}

FoldAssignment assign_view_folds(const TwoPeriodView& view, std::size_t k, std::uint64_t seed) {
  const std::size_t n = view.size();
  std::unordered_map<std::string, std::size_t> group_of;
  std::vector<std::size_t> row_group(n);
  std::vector<double> group_d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = i < view.source_unit.size() ? view.source_unit[i] : std::to_string(i);
    auto [it, fresh] = group_of.emplace(id, group_d.size());
    if (fresh) group_d.push_back(0.0);
    row_group[i] = it->second;
    if (view.d(static_cast<Eigen::Index>(i)) != 0.0) group_d[it->second] = 1.0;
  }
  const FoldAssignment units = assign_folds(group_d.size(), k, seed, group_d);
  FoldAssignment out;
  out.n = n;
  out.k = k;
  out.seed = seed;
  out.fold_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.fold_of[i] = units.fold_of[row_group[i]];
  return out;
}

Vector cross_fit_regression(const Matrix& w, const Vector& labels, const std::vector<char>& eligible,
                            const FoldAssignment& folds, const LearnerSpec& spec, int jobs) {
  constexpr const char* op = "cross_fit";
  const auto n = static_cast<std::size_t>(w.rows());
  if (labels.size() != w.rows() || eligible.size() != n || folds.fold_of.size() != n)
    throw Error(kModule, op, "inputs are not aligned");
  Vector out = Vector::Constant(w.rows(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(folds.k, jobs, [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) {
      if (folds.fold_of[i] == static_cast<int>(f)) test.push_back(i);
      else if (eligible[i]) train.push_back(i);
    }
    if (test.empty()) return;
    if (train.empty())
      throw Error(kModule, op, "fold " + std::to_string(f) + ": training complement has no eligible rows");
    try {
      const RegressionModel m =
          fit_regression(select_rows(w, train), select_rows(labels, train), with_fold_seed(spec, f));
      const Vector p = m.predict(select_rows(w, test));
      for (std::size_t j = 0; j < test.size(); ++j) out(static_cast<Eigen::Index>(test[j])) = p(static_cast<Eigen::Index>(j));
    } catch (const Error& e) {
      rethrow_with_fold(e, f, op);
    }
  });
  return out;
}

Vector cross_fit_propensity(const Matrix& w, const Vector& labels, const FoldAssignment& folds,
                            const LearnerSpec& spec, double clip, int jobs) {
  constexpr const char* op = "cross_fit";
  check_clip(clip, op);
  const auto n = static_cast<std::size_t>(w.rows());
  if (labels.size() != w.rows() || folds.fold_of.size() != n) throw Error(kModule, op, "inputs are not aligned");
  Vector out = Vector::Constant(w.rows(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(folds.k, jobs, [&](std::size_t f) {
    const auto test = folds.rows_in(static_cast<int>(f));
    if (test.empty()) return;
    const auto train = folds.rows_not_in(static_cast<int>(f));
    try {
      const PropensityModel m =
          fit_propensity(select_rows(w, train), select_rows(labels, train), with_fold_seed(spec, f));
      const Vector p = m.predict(select_rows(w, test), clip);
      for (std::size_t j = 0; j < test.size(); ++j) out(static_cast<Eigen::Index>(test[j])) = p(static_cast<Eigen::Index>(j));
    } catch (const Error& e) {
      rethrow_with_fold(e, f, op);
    }
  });
  return out;
}

NuisanceEstimates cross_fit(const TwoPeriodView& view, const FoldAssignment& folds, const LearnerSpec& g_spec,
                            const LearnerSpec& pi_spec, double clip, int jobs) {
  constexpr const char* op = "cross_fit";
  check_clip(clip, op);
  view.validate();
  const std::size_t n = view.size();
  if (folds.fold_of.size() != n) throw Error(kModule, op, "fold assignment does not match the view");
  if (folds.k < 2) throw Error(kModule, op, "need K >= 2 folds");
  std::vector<char> control(n);
  bool any_t = false, any_c = false;
  for (std::size_t i = 0; i < n; ++i) {
    control[i] = view.d(static_cast<Eigen::Index>(i)) == 0.0;
    (control[i] ? any_c : any_t) = true;
  }
  if (!(any_t && any_c)) throw Error(kModule, op, "view must contain both treated and control rows");

  NuisanceEstimates out;
  out.g_hat = cross_fit_regression(view.w, view.s, control, folds, g_spec, jobs);
  out.pi_hat = cross_fit_propensity(view.w, view.d, folds, pi_spec, clip, jobs);
  out.fold = folds;
  out.clip = clip;
  out.g_learner = to_string(g_spec.kind);
  out.pi_learner = to_string(pi_spec.kind);
  return out;
}

NuisanceEstimates cross_fit(const TwoPeriodView& view, std::size_t k, const LearnerSpec& g_spec,
                            const LearnerSpec& pi_spec, double clip, std::uint64_t seed, int jobs) {
  if (k < 2) throw Error(kModule, "cross_fit", "need K >= 2 folds");
  return cross_fit(view, assign_view_folds(view, k, seed), g_spec, pi_spec, clip, jobs);
}

Vector cross_fit_treated(const TwoPeriodView& view, const FoldAssignment& folds, const LearnerSpec& g1_spec,
                         int jobs) {
  const std::size_t n = view.size();
  std::vector<char> treated(n);
  for (std::size_t i = 0; i < n; ++i) treated[i] = view.d(static_cast<Eigen::Index>(i)) != 0.0;
  return cross_fit_regression(view.w, view.s, treated, folds, g1_spec, jobs);
}

}  // namespace didcatt
