#include "didcatt/covshift.hpp"

#include <algorithm>
#include <cmath>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "covshift";

Matrix with_arm(const Matrix& w, double arm) {
  Matrix out(w.rows(), w.cols() + 1);
  out.col(0).setConstant(arm);
  out.rightCols(w.cols()) = w;
  return out;
}

}  // namespace

Matrix ShiftView::x() const { return select_cols(w, x_cols); }

std::vector<std::string> ShiftView::x_names() const {
  std::vector<std::string> out;
  for (auto c : x_cols) out.push_back(c < w_names.size() ? w_names[c] : "x" + std::to_string(c));
  return out;
}

void ShiftView::validate() const {
  constexpr const char* op = "ShiftView";
  const auto n = e.size();
  if (w.rows() != n || y.size() != n) throw Error(kModule, op, "misaligned view arrays");
  if (d.size() != 0 && d.size() != n) throw Error(kModule, op, "auxiliary D column misaligned");
  if (s.size() != 0 && s.size() != n) throw Error(kModule, op, "auxiliary S column misaligned");
  if (pi_known && pi_known->size() != n) throw Error(kModule, op, "known propensity column misaligned");
  for (std::size_t i = 0; i < x_cols.size(); ++i) {
    if (x_cols[i] >= static_cast<std::size_t>(w.cols())) throw Error(kModule, op, "x_cols index out of bounds");
    if (i > 0 && x_cols[i] <= x_cols[i - 1]) throw Error(kModule, op, "x_cols must be strictly increasing");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (e(i) != 0.0 && e(i) != 1.0) throw Error(kModule, op, "E must be 0/1");
    if (e(i) == 0.0 && !std::isfinite(y(i)))
      throw Error(kModule, op, "label missing on source row " + std::to_string(i));
  }
}

std::string to_string(MomentKind kind) {
  switch (kind) {
    case MomentKind::kIdentity: return "identity";
    case MomentKind::kCateDiff: return "cate_diff";
    case MomentKind::kOutcomeMinus: return "outcome_minus";
  }
  return "?";
}

MomentKind moment_kind_from_string(const std::string& name) {
  for (auto k : {MomentKind::kIdentity, MomentKind::kCateDiff, MomentKind::kOutcomeMinus})
    if (to_string(k) == name) return k;
  throw Error(kModule, "moment_value", "unknown moment '" + name + "'");
}

double moment_value(const MomentInputs& in, MomentKind kind) {
  switch (kind) {
    case MomentKind::kIdentity: return in.g;
    case MomentKind::kCateDiff: return in.g1 - in.g0;
    case MomentKind::kOutcomeMinus:
      if (!in.s) throw Error(kModule, "moment_value", "outcome_minus moment needs the auxiliary S column");
      return *in.s - in.g;
  }
  return 0.0;
}

RieszSpec RieszSpec::constant(double v) {
  RieszSpec r;
  r.kind = Kind::kConstant;
  r.value = v;
  return r;
}

RieszSpec RieszSpec::cate_shift(Vector q, double clip) {
  RieszSpec r;
  r.kind = Kind::kCateShift;
  r.q = std::move(q);
  r.q_clip = clip;
  return r;
}

RieszSpec RieszSpec::user_table(Vector alpha) {
  RieszSpec r;
  r.kind = Kind::kUserTable;
  r.table = std::move(alpha);
  return r;
}

Vector riesz_values(const ShiftView& view, const RieszSpec& spec) {
  constexpr const char* op = "riesz";
  const auto n = static_cast<Eigen::Index>(view.size());
  Vector alpha(n);
  switch (spec.kind) {
    case RieszSpec::Kind::kConstant:
      if (!std::isfinite(spec.value)) throw Error(kModule, op, "non-finite constant representer");
      alpha.setConstant(spec.value);
      break;
    case RieszSpec::Kind::kCateShift: {
      if (view.d.size() != n) throw Error(kModule, op, "cate_shift representer needs the auxiliary D column");
      if (spec.q.size() != n) throw Error(kModule, op, "q misaligned with the view");
      const double c = spec.q_clip;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double q = spec.q(i);
        if (!(q >= c && q <= 1.0 - c)) throw Error(kModule, op, "q must be clipped to [c, 1 - c]");
        alpha(i) = view.d(i) / q - (1.0 - view.d(i)) / (1.0 - q);
      }
      break;
    }
    case RieszSpec::Kind::kUserTable:
      if (spec.table.size() != n) throw Error(kModule, op, "user alpha table misaligned with the view");
      alpha = spec.table;
      break;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(alpha(i))) throw Error(kModule, op, "non-finite representer at row " + std::to_string(i));
  return alpha;
}

ShiftNuisance cross_fit_shift(const ShiftView& view, MomentKind kind, std::size_t k, const LearnerSpec& g_spec,
                              const LearnerSpec& pi_spec, double clip, std::uint64_t seed, int jobs) {
  constexpr const char* op = "cross_fit_shift";
  view.validate();
  const std::size_t n = view.size();
  std::vector<char> source(n);
  for (std::size_t i = 0; i < n; ++i) source[i] = view.e(static_cast<Eigen::Index>(i)) == 0.0;
  const FoldAssignment folds = assign_folds(n, k, seed, std::span<const double>(view.e.data(), n));
  // Target labels are replaced before any learner sees the label vector.
  Vector labels = view.y;
  for (std::size_t i = 0; i < n; ++i)
    if (!source[i]) labels(static_cast<Eigen::Index>(i)) = 0.0;

  ShiftNuisance out;
  out.fold = folds;
  out.clip = clip;
  if (kind == MomentKind::kCateDiff) {
    if (view.d.size() != static_cast<Eigen::Index>(n)) throw Error(kModule, op, "cate_diff needs the auxiliary D column");
    Matrix dw(view.w.rows(), view.w.cols() + 1);
    dw.col(0) = view.d;
    dw.rightCols(view.w.cols()) = view.w;
    // One model over (D, W) per fold, evaluated at the observed arm and both arms.
    const Matrix w1 = with_arm(view.w, 1.0), w0 = with_arm(view.w, 0.0);
    out.g = Vector(n);
    out.g1 = Vector(n);
    out.g0 = Vector(n);
    for (std::size_t f = 0; f < folds.k; ++f) {
      const auto test = folds.rows_in(static_cast<int>(f));
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < n; ++i)
        if (folds.fold_of[i] != static_cast<int>(f) && source[i]) train.push_back(i);
      if (test.empty()) continue;
      if (train.empty()) throw Error(kModule, op, "fold " + std::to_string(f) + ": no source rows to train g");
      LearnerSpec s = g_spec;
      s.seed = derive_seed(g_spec.seed, "fold", f);
      const RegressionModel m = fit_regression(select_rows(dw, train), select_rows(labels, train), s);
      const Vector pg = m.predict(select_rows(dw, test));
      const Vector p1 = m.predict(select_rows(w1, test));
      const Vector p0 = m.predict(select_rows(w0, test));
      for (std::size_t j = 0; j < test.size(); ++j) {
        const auto r = static_cast<Eigen::Index>(test[j]);
        const auto jj = static_cast<Eigen::Index>(j);
        out.g(r) = pg(jj);
        out.g1(r) = p1(jj);
        out.g0(r) = p0(jj);
      }
    }
  } else {
    out.g = cross_fit_regression(view.w, labels, source, folds, g_spec, jobs);
  }
  if (view.pi_known) {
    out.pi = view.pi_known->unaryExpr([clip](double p) { return std::clamp(p, clip, 1.0 - clip); });
  } else {
    out.pi = cross_fit_propensity(view.w, view.e, folds, pi_spec, clip, jobs);
  }
  return out;
}

Vector cross_fit_target_treatment(const ShiftView& view, const FoldAssignment& folds, const LearnerSpec& spec,
                                  double clip, int jobs) {
  constexpr const char* op = "cross_fit_target_treatment";
  const std::size_t n = view.size();
  if (view.d.size() != static_cast<Eigen::Index>(n)) throw Error(kModule, op, "needs the auxiliary D column");
  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < n; ++i)
    if (view.e(static_cast<Eigen::Index>(i)) == 1.0) target.push_back(i);
  FoldAssignment sub;
  sub.n = target.size();
  sub.k = folds.k;
  sub.seed = folds.seed;
  for (auto i : target) sub.fold_of.push_back(folds.fold_of[i]);
  const Vector q_target = cross_fit_propensity(select_rows(view.w, target), select_rows(view.d, target), sub, spec,
                                               clip, jobs);
  // Source rows reuse the fold's target-trained model.
  Vector q = Vector::Constant(static_cast<Eigen::Index>(n), 0.5);
  for (std::size_t f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t j = 0; j < target.size(); ++j)
      if (sub.fold_of[j] != static_cast<int>(f)) train.push_back(target[j]);
    for (std::size_t i = 0; i < n; ++i)
      if (folds.fold_of[i] == static_cast<int>(f) && view.e(static_cast<Eigen::Index>(i)) == 0.0) test.push_back(i);
    if (test.empty()) continue;
    LearnerSpec s = spec;
    s.seed = derive_seed(spec.seed, "fold", f);
    const Vector p = fit_propensity(select_rows(view.w, train), select_rows(view.d, train), s)
                         .predict(select_rows(view.w, test), clip);
    for (std::size_t j = 0; j < test.size(); ++j) q(static_cast<Eigen::Index>(test[j])) = p(static_cast<Eigen::Index>(j));
  }
  for (std::size_t j = 0; j < target.size(); ++j) q(static_cast<Eigen::Index>(target[j])) = q_target(static_cast<Eigen::Index>(j));
  return q;
}

PseudoOutcome covshift_pseudo_outcome(const ShiftView& view, const ShiftNuisance& nuis, const Vector& alpha,
                                      MomentKind kind) {
  constexpr const char* op = "covshift_pseudo_outcome";
  view.validate();
  const auto n = static_cast<Eigen::Index>(view.size());
  if (nuis.g.size() != n || nuis.pi.size() != n || alpha.size() != n) throw Error(kModule, op, "misaligned inputs");
  if (kind == MomentKind::kCateDiff && (nuis.g1.size() != n || nuis.g0.size() != n))
    throw Error(kModule, op, "cate_diff needs g at both arms");
  if (kind == MomentKind::kOutcomeMinus && view.s.size() != n)
    throw Error(kModule, op, "outcome_minus moment needs the auxiliary S column");
  const double c = nuis.clip;
  PseudoOutcome out;
  out.y_hat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = nuis.pi(i);
    if (!(pi >= c && pi <= 1.0 - c) || !(c > 0.0 && c < 0.5))
      throw Error(kModule, op, "pi must be clipped to [c, 1 - c] (row " + std::to_string(i) + ")");
    if (view.e(i) == 1.0) {
      MomentInputs in;
      in.g = nuis.g(i);
      if (kind == MomentKind::kCateDiff) {
        in.g1 = nuis.g1(i);
        in.g0 = nuis.g0(i);
      }
      if (kind == MomentKind::kOutcomeMinus) in.s = view.s(i);
      out.y_hat(i) = moment_value(in, kind);
    } else {
      out.y_hat(i) = ((pi / (1.0 - pi)) * alpha(i)) * (view.y(i) - nuis.g(i));
    }
    if (!std::isfinite(out.y_hat(i))) throw Error(kModule, op, "non-finite pseudo-outcome at row " + std::to_string(i));
  }
  out.d = view.e;
  out.x = view.x();
  out.x_cols = view.x_cols;
  out.x_names = view.x_names();
  out.provenance = "covshift;moment=" + to_string(kind) + ";clip=" + format_double(c);
  return out;
}

CattModel fit_covshift_functional(const PseudoOutcome& pseudo, const LearnerSpec& final_spec, double ridge_penalty) {
  if (!(pseudo.d.array() != 0.0).any()) throw Error(kModule, "fit_covshift_functional", "no target rows");
  CattModel m = fit_incomplete_loss(pseudo.x, pseudo.d, pseudo.y_hat, final_spec, ridge_penalty);
  m.estimator = "covshift";
  m.x_cols = pseudo.x_cols;
  if (pseudo.x_names.size() == m.x_names.size()) m.x_names = pseudo.x_names;
  m.metadata.emplace_back("pseudo", pseudo.provenance);
  return m;
}

ShiftView shift_view_from_catt(const TwoPeriodView& view) {
  ShiftView v;
  v.w = view.w;
  v.x_cols = view.x_cols;
  v.e = view.d;
  v.y = view.s;
  v.s = view.s;
  v.w_names = view.w_names;
  return v;
}

}  // namespace didcatt
