#include "didcatt/iv.hpp"

#include <algorithm>
#include <cmath>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "iv_did";

void check_cols(const std::vector<std::size_t>& cols, std::size_t p, const char* op) {
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= p) throw Error(kModule, op, "x_cols index " + std::to_string(cols[i]) + " out of bounds");
    if (i > 0 && cols[i] <= cols[i - 1]) throw Error(kModule, op, "x_cols must be strictly increasing");
  }
}

Matrix append_column(const Matrix& w, const Vector& c) {
  Matrix out(w.rows(), w.cols() + 1);
  out.leftCols(w.cols()) = w;
  out.col(w.cols()) = c;
  return out;
}

}  // namespace

Matrix IvView::x() const { return select_cols(w, x_cols); }

std::vector<std::string> IvView::x_names() const {
  std::vector<std::string> out;
  for (auto c : x_cols) out.push_back(c < w_names.size() ? w_names[c] : "x" + std::to_string(c));
  return out;
}

IvView IvView::subset(std::span<const std::size_t> rows) const {
  IvView v;
  v.w = select_rows(w, rows);
  v.x_cols = x_cols;
  v.z = select_rows(z, rows);
  v.dy = select_rows(dy, rows);
  v.dd = select_rows(dd, rows);
  for (auto r : rows) v.source_unit.push_back(source_unit.at(r));
  v.w_names = w_names;
  v.lagged = lagged;
  if (lagged) {
    v.y_pre = select_rows(y_pre, rows);
    v.d_pre = select_rows(d_pre, rows);
  }
  return v;
}

void IvView::validate() const {
  constexpr const char* op = "IvView";
  const auto n = z.size();
  if (w.rows() != n || dy.size() != n || dd.size() != n || source_unit.size() != static_cast<std::size_t>(n))
    throw Error(kModule, op, "misaligned view arrays");
  if (lagged && (y_pre.size() != n || d_pre.size() != n)) throw Error(kModule, op, "misaligned lagged columns");
  check_cols(x_cols, static_cast<std::size_t>(w.cols()), op);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z(i) != 0.0 && z(i) != 1.0) throw Error(kModule, op, "Z must be 0/1");
    if (!std::isfinite(dy(i)) || !std::isfinite(dd(i))) throw Error(kModule, op, "non-finite contrast");
    if (!lagged && dd(i) != -1.0 && dd(i) != 0.0 && dd(i) != 1.0)
      throw Error(kModule, op, "treatment contrast must lie in {-1, 0, 1}");
  }
}

IvView iv_view(const PanelDataset& data, std::size_t pre, std::size_t post, const std::vector<std::size_t>& x_cols,
               Transform transform) {
  constexpr const char* op = "iv_view";
  if (!data.has_instrument() || !data.has_treatments())
    throw Error(kModule, op, "panel lacks instrument or treatment columns");
  if (!(pre < post) || post >= data.num_periods()) throw Error(kModule, op, "require pre < post < T");
  check_cols(x_cols, data.num_covariates(), op);
  const auto n = static_cast<Eigen::Index>(data.num_units());
  IvView v;
  v.w = data.covariate_matrix();
  v.x_cols = x_cols;
  v.w_names = data.covariate_names();
  v.z.resize(n);
  v.dy.resize(n);
  v.dd.resize(n);
  v.lagged = transform == Transform::kLaggedOutcome;
  if (v.lagged) {
    v.y_pre.resize(n);
    v.d_pre.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const UnitRecord& u = data.unit(static_cast<std::size_t>(i));
    v.z(i) = static_cast<double>(*u.instrument);
    const double y0 = u.outcomes[pre], y1 = u.outcomes[post];
    const double d0 = u.treatments[pre], d1 = u.treatments[post];
    if (v.lagged) {
      v.dy(i) = y1;
      v.dd(i) = d1;
      v.y_pre(i) = y0;
      v.d_pre(i) = d0;
    } else {
      v.dy(i) = y1 - y0;
      v.dd(i) = d1 - d0;
    }
    v.source_unit.push_back(u.id);
  }
  v.validate();
  return v;
}

void IvNuisance::validate(std::size_t n) const {
  constexpr const char* op = "IvNuisance";
  if (size() != n || static_cast<std::size_t>(g_y.size()) != n || static_cast<std::size_t>(g_d.size()) != n)
    throw Error(kModule, op, "nuisance arrays are not aligned with the view");
  if (!(clip > 0.0 && clip < 0.5)) throw Error(kModule, op, "clip must lie in (0, 0.5)");
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    if (!(pi(i) >= clip && pi(i) <= 1.0 - clip)) throw Error(kModule, op, "pi outside [clip, 1 - clip]");
    if (!std::isfinite(g_y(i)) || !std::isfinite(g_d(i))) throw Error(kModule, op, "non-finite regression value");
  }
}

IvNuisance IvNuisance::from_arrays(Vector g_y, Vector g_d, const Vector& pi, double clip) {
  if (!(clip > 0.0 && clip < 0.5)) throw Error(kModule, "from_arrays", "clip must lie in (0, 0.5)");
  IvNuisance out;
  out.g_y = std::move(g_y);
  out.g_d = std::move(g_d);
  out.pi = pi.unaryExpr([clip](double p) { return std::clamp(p, clip, 1.0 - clip); });
  out.clip = clip;
  return out;
}

IvNuisance cross_fit_iv(const IvView& view, std::size_t k, const LearnerSpec& g_spec, const LearnerSpec& pi_spec,
                        double clip, std::uint64_t seed, int jobs) {
  constexpr const char* op = "cross_fit_iv";
  view.validate();
  const std::size_t n = view.size();
  std::vector<char> unexposed(n);
  bool any0 = false, any1 = false;
  for (std::size_t i = 0; i < n; ++i) {
    unexposed[i] = view.z(static_cast<Eigen::Index>(i)) == 0.0;
    (unexposed[i] ? any0 : any1) = true;
  }
  if (!(any0 && any1)) throw Error(kModule, op, "need both exposed and unexposed rows");
  const FoldAssignment folds = assign_folds(n, k, seed, std::span<const double>(view.z.data(), n));
  IvNuisance out;
  const Matrix wy = view.lagged ? append_column(view.w, view.y_pre) : view.w;
  const Matrix wd = view.lagged ? append_column(view.w, view.d_pre) : view.w;
  LearnerSpec gy = g_spec, gd = g_spec;
  gy.seed = derive_seed(g_spec.seed, "g_y");
  gd.seed = derive_seed(g_spec.seed, "g_d");
  out.g_y = cross_fit_regression(wy, view.dy, unexposed, folds, gy, jobs);
  out.g_d = cross_fit_regression(wd, view.dd, unexposed, folds, gd, jobs);
  out.pi = cross_fit_propensity(view.w, view.z, folds, pi_spec, clip, jobs);
  out.fold = folds;
  out.clip = clip;
  return out;
}

IvPseudo iv_pseudo(const IvView& view, const IvNuisance& nuis) {
  constexpr const char* op = "iv_pseudo";
  if (nuis.size() != view.size()) throw Error(kModule, op, "misaligned inputs");
  nuis.validate(view.size());
  IvPseudo out;
  const auto n = static_cast<Eigen::Index>(view.size());
  out.a.resize(n);
  out.b.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zh = (view.z(i) - nuis.pi(i)) / (1.0 - nuis.pi(i));
    out.a(i) = zh * (view.dy(i) - nuis.g_y(i));
    out.b(i) = zh * (view.dd(i) - nuis.g_d(i));
  }
  out.x = view.x();
  out.x_cols = view.x_cols;
  out.x_names = view.x_names();
  return out;
}

LattResult latt(const Vector& a, const Vector& b, double c_z) {
  constexpr const char* op = "latt";
  if (a.size() != b.size()) throw Error(kModule, op, "misaligned inputs");
  if (a.size() == 0) throw Error(kModule, op, "no rows");
  LattResult r;
  r.mean_a = mean(as_span(a));
  r.mean_b = mean(as_span(b));
  if (!(std::abs(r.mean_b) >= 1e-12))
    throw Error(kModule, op, "first-stage moment mean(B) = " + format_double(r.mean_b) + " is numerically zero");
  r.estimate = r.mean_a / r.mean_b;
  r.weak_instrument = std::abs(r.mean_b) < c_z;
  const Vector resid = a - r.estimate * b;
  r.se = sample_sd(as_span(resid)) / (std::sqrt(static_cast<double>(a.size())) * std::abs(r.mean_b));
  return r;
}

ClateFit fit_dr_clate(const IvPseudo& pseudo, const LearnerSpec& final_spec, double ridge_penalty, double c_z) {
  constexpr const char* op = "fit_dr_clate";
  if (final_spec.kind != LearnerKind::kLinear)
    throw Error(kModule, op, "only the linear final class is supported for CLATE (sign-indefinite weights)");
  ClateFit out;
  out.mean_b = mean(as_span(pseudo.b));
  out.weak_instrument = std::abs(out.mean_b) < c_z;
  const auto n = static_cast<std::size_t>(pseudo.a.size());
  const double lambda = ridge_penalty < 0.0 ? default_ridge_penalty(n) : ridge_penalty;
  {
    const Matrix phi = feature_map(pseudo.x, final_spec.feature_map);
    Matrix sys = phi.transpose() * (phi.array().colwise() * pseudo.b.array()).matrix();
    if (phi.cols() > 1) sys.diagonal().tail(phi.cols() - 1).array() += lambda;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sys, Eigen::EigenvaluesOnly);
    out.smallest_eigenvalue = eig.eigenvalues().minCoeff();
  }
  try {
    out.model = fit_incomplete_loss(pseudo.x, pseudo.b, pseudo.a, final_spec, lambda, true);
  } catch (const Error& e) {
    throw Error(kModule, op, e.what());
  }
  out.model.estimator = "clate";
  out.model.x_cols = pseudo.x_cols;
  if (pseudo.x_names.size() == out.model.x_names.size()) out.model.x_names = pseudo.x_names;
  out.model.metadata.emplace_back("mean_b", format_double(out.mean_b));
  return out;
}

}  // namespace didcatt
