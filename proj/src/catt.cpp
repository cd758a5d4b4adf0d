#include "didcatt/catt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "catt_core";
constexpr const char* kMagic = "didcatt-model v1";

void check_aligned(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw Error(kModule, op, "misaligned inputs (" + std::to_string(a) + " vs " + std::to_string(b) + " rows)");
}

bool has_treated(const Vector& d) { return (d.array() != 0.0).any(); }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

}  // namespace

PseudoOutcome PseudoOutcome::subset(std::span<const std::size_t> rows) const {
  PseudoOutcome out;
  out.y_hat = select_rows(y_hat, rows);
  out.d = select_rows(d, rows);
  out.x = select_rows(x, rows);
  out.x_cols = x_cols;
  out.x_names = x_names;
  out.provenance = provenance;
  return out;
}

PseudoOutcome pseudo_outcome(const TwoPeriodView& view, const NuisanceEstimates& nuis) {
  constexpr const char* op = "pseudo_outcome";
  const std::size_t n = view.size();
  check_aligned(nuis.size(), n, op);
  nuis.validate(n);
  PseudoOutcome out;
  out.y_hat.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const double pi = nuis.pi_hat(i);
    out.y_hat(i) = ((view.d(i) - pi) / (1.0 - pi)) * (view.s(i) - nuis.g_hat(i));
    if (!std::isfinite(out.y_hat(i))) throw Error(kModule, op, "non-finite pseudo-outcome at row " + std::to_string(i));
  }
  out.d = view.d;
  out.x = view.x();
  out.x_cols = view.x_cols;
  out.x_names = view.x_names();
  out.provenance = "g=" + nuis.g_learner + ";pi=" + nuis.pi_learner + ";clip=" + format_double(nuis.clip);
  return out;
}

double weighted_incomplete_loss(const Vector& theta, const Vector& weight, const Vector& target) {
  check_aligned(static_cast<std::size_t>(theta.size()), static_cast<std::size_t>(target.size()), "dr_loss");
  check_aligned(static_cast<std::size_t>(weight.size()), static_cast<std::size_t>(target.size()), "dr_loss");
  std::vector<double> terms(static_cast<std::size_t>(theta.size()));
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    terms[static_cast<std::size_t>(i)] = weight(i) * theta(i) * theta(i) - 2.0 * target(i) * theta(i);
  return mean(terms);
}

double dr_loss(const Vector& theta, const PseudoOutcome& pseudo) {
  return weighted_incomplete_loss(theta, pseudo.d, pseudo.y_hat);
}

double att(const PseudoOutcome& pseudo) {
  check_aligned(static_cast<std::size_t>(pseudo.d.size()), pseudo.size(), "att");
  if (!has_treated(pseudo.d)) throw Error(kModule, "att", "no treated rows");
  return mean(as_span(pseudo.y_hat)) / mean(as_span(pseudo.d));
}

Matrix feature_map(const Matrix& x, FeatureMap map) {
  const auto n = x.rows();
  const auto p = x.cols();
  const Eigen::Index q = map == FeatureMap::kRaw ? 1 + p : 1 + p + p * (p + 1) / 2;
  Matrix phi(n, q);
  phi.col(0).setOnes();
  phi.middleCols(1, p) = x;
  if (map == FeatureMap::kQuadratic) {
    Eigen::Index c = 1 + p;
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = j; k < p; ++k) phi.col(c++) = x.col(j).cwiseProduct(x.col(k));
  }
  return phi;
}

std::vector<std::string> feature_names(const std::vector<std::string>& x_names, FeatureMap map) {
  std::vector<std::string> out = {"intercept"};
  out.insert(out.end(), x_names.begin(), x_names.end());
  if (map == FeatureMap::kQuadratic)
    for (std::size_t j = 0; j < x_names.size(); ++j)
      for (std::size_t k = j; k < x_names.size(); ++k) out.push_back(x_names[j] + "*" + x_names[k]);
  return out;
}

double default_ridge_penalty(std::size_t n) { return 1e-6 * static_cast<double>(n); }

Vector CattModel::predict(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != arity())
    throw Error(kModule, "predict",
                "feature arity mismatch: model expects " + std::to_string(arity()) + " columns, got " +
                    std::to_string(x.cols()));
  if (final_kind == LearnerKind::kGbt) return ensemble.predict(x);
  return feature_map(x, map) * beta;
}

Vector predict(const CattModel& model, const Matrix& x) { return model.predict(x); }

CattModel fit_incomplete_loss(const Matrix& x, const Vector& weight, const Vector& target, const LearnerSpec& spec,
                              double ridge_penalty, bool require_pd) {
  constexpr const char* op = "fit";
  const auto n = static_cast<std::size_t>(target.size());
  check_aligned(static_cast<std::size_t>(x.rows()), n, op);
  check_aligned(static_cast<std::size_t>(weight.size()), n, op);
  if (n == 0) throw Error(kModule, op, "no rows");
  if (spec.kind != LearnerKind::kLinear && spec.kind != LearnerKind::kGbt)
    throw Error(kModule, op, "final stage must be 'linear' or 'gbt', got '" + to_string(spec.kind) + "'");
  spec.validate();
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (!std::isfinite(target(i)) || !std::isfinite(weight(i)))
      throw Error(kModule, op, "non-finite pseudo-outcome at row " + std::to_string(i));

  CattModel m;
  m.final_kind = spec.kind;
  m.map = spec.feature_map;
  for (Eigen::Index j = 0; j < x.cols(); ++j) m.x_names.push_back("x" + std::to_string(j));
  const double wbar = mean(as_span(weight));
  const double lambda = ridge_penalty < 0.0 ? default_ridge_penalty(n) : ridge_penalty;

  if (spec.kind == LearnerKind::kLinear) {
    m.ridge_penalty = lambda;
    const Matrix phi = feature_map(x, spec.feature_map);
    const auto q = phi.cols();
    if (q == 1) {
      if (require_pd ? !(std::abs(wbar) >= 1e-12) : !(wbar > 0.0))
        throw Error(kModule, op, "weights average to " + format_double(wbar) + "; the constant fit is undefined");
      m.beta = Vector::Constant(1, mean(as_span(target)) / wbar);
    } else {
      Matrix a = phi.transpose() * (phi.array().colwise() * weight.array()).matrix();
      a.diagonal().tail(q - 1).array() += lambda;
      const Vector b = phi.transpose() * target;
      if (require_pd) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
        const double smallest = eig.eigenvalues().minCoeff();
        if (!(smallest > 1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())))
          throw Error(kModule, op,
                      "regularized system is not positive definite (smallest eigenvalue " + format_double(smallest) +
                          ")");
      }
      Eigen::LLT<Matrix> llt(a);
      if (llt.info() != Eigen::Success)
        throw Error(kModule, op,
                    "singular final-stage system at ridge penalty " + format_double(lambda) + "; try ridge_penalty >= " +
                        format_double(std::max(default_ridge_penalty(n), 1e-6)));
      m.beta = llt.solve(b);
      if (!m.beta.allFinite()) throw Error(kModule, op, "final-stage solve produced non-finite coefficients");
    }
  } else {
    constexpr double kHessFloor = 1e-6;
    GbtParams p = spec.gbt_params();
    p.reg_lambda = 2.0 * kHessFloor;
    p.min_child_hessian = 2.0 * spec.min_child_weight;
    GbtObjective obj;
    obj.grad_hess = [&](std::size_t i, double f) {
      const auto r = static_cast<Eigen::Index>(i);
      return std::pair{2.0 * (weight(r) * f - target(r)), 2.0 * weight(r)};
    };
    obj.loss = [&](std::size_t i, double f) {
      const auto r = static_cast<Eigen::Index>(i);
      return weight(r) * f * f - 2.0 * target(r) * f;
    };
    const double base = wbar > 0.0 ? mean(as_span(target)) / wbar : 0.0;
    GbtFit fit = fit_gbt(x, obj, base, p);
    m.ensemble = std::move(fit.model);
    m.loss_trace = std::move(fit.loss_trace);
  }
  m.training_loss = weighted_incomplete_loss(m.predict(x), weight, target);
  return m;
}

namespace {

void label_model(CattModel& m, const char* estimator, const std::vector<std::size_t>& x_cols,
                 const std::vector<std::string>& x_names) {
  m.estimator = estimator;
  m.x_cols = x_cols;
  if (x_names.size() == m.x_names.size()) m.x_names = x_names;
}

}  // namespace

CattModel fit_dr_catt(const PseudoOutcome& pseudo, const LearnerSpec& final_spec, double ridge_penalty) {
  if (!has_treated(pseudo.d)) throw Error(kModule, "fit_dr_catt", "no treated rows");
  CattModel m = fit_incomplete_loss(pseudo.x, pseudo.d, pseudo.y_hat, final_spec, ridge_penalty);
  label_model(m, "dr", pseudo.x_cols, pseudo.x_names);
  m.metadata.emplace_back("nuisance", pseudo.provenance);
  return m;
}

CattModel fit_or_catt(const TwoPeriodView& view, const NuisanceEstimates& nuis, const LearnerSpec& final_spec,
                      double ridge_penalty) {
  check_aligned(nuis.size(), view.size(), "fit_or_catt");
  if (!has_treated(view.d)) throw Error(kModule, "fit_or_catt", "no treated rows");
  const Vector target = view.d.cwiseProduct(view.s - nuis.g_hat);
  CattModel m = fit_incomplete_loss(view.x(), view.d, target, final_spec, ridge_penalty);
  label_model(m, "or", view.x_cols, view.x_names());
  m.metadata.emplace_back("nuisance", "g=" + nuis.g_learner);
  return m;
}

CattModel fit_cate_or(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis,
                      const LearnerSpec& final_spec, double ridge_penalty) {
  check_aligned(nuis.size(), view.size(), "fit_cate_or");
  check_aligned(static_cast<std::size_t>(g1_hat.size()), view.size(), "fit_cate_or");
  if (!has_treated(view.d)) throw Error(kModule, "fit_cate_or", "no treated rows");
  const Vector target = view.d.cwiseProduct(g1_hat - nuis.g_hat);
  CattModel m = fit_incomplete_loss(view.x(), view.d, target, final_spec, ridge_penalty);
  label_model(m, "cate_or", view.x_cols, view.x_names());
  return m;
}

Vector cate_dr_outcome(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis) {
  check_aligned(nuis.size(), view.size(), "fit_cate_dr");
  check_aligned(static_cast<std::size_t>(g1_hat.size()), view.size(), "fit_cate_dr");
  nuis.validate(view.size());
  Vector y(view.s.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double d = view.d(i), pi = nuis.pi_hat(i);
    const double g_d = d != 0.0 ? g1_hat(i) : nuis.g_hat(i);
    y(i) = g1_hat(i) - nuis.g_hat(i) + (d / pi - (1.0 - d) / (1.0 - pi)) * (view.s(i) - g_d);
  }
  return y;
}

CattModel fit_cate_dr(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis,
                      const LearnerSpec& final_spec, double ridge_penalty, CateDrRows rows) {
  if (!has_treated(view.d)) throw Error(kModule, "fit_cate_dr", "no treated rows");
  const Vector y = cate_dr_outcome(view, g1_hat, nuis);
  CattModel m = rows == CateDrRows::kTreated
                    ? fit_incomplete_loss(view.x(), view.d, view.d.cwiseProduct(y), final_spec, ridge_penalty)
                    : fit_incomplete_loss(view.x(), Vector::Ones(y.size()), y, final_spec, ridge_penalty);
  label_model(m, "cate_dr", view.x_cols, view.x_names());
  m.metadata.emplace_back("rows", rows == CateDrRows::kTreated ? "treated" : "all");
  return m;
}

std::size_t select_by_heldout_loss(const std::vector<CattModel>& candidates, const PseudoOutcome& heldout) {
  if (candidates.empty()) throw Error(kModule, "select_model", "no candidate models");
  std::size_t best = 0;
  double best_loss = dr_loss(candidates[0].predict(heldout.x), heldout);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double l = dr_loss(candidates[i].predict(heldout.x), heldout);
    if (l < best_loss) {
      best = i;
      best_loss = l;
    }
  }
  return best;
}

// Serialization ---------------------------------------------------------------

void CattModel::save(std::ostream& out) const {
  out << kMagic << "\n";
  out << "estimator " << one_line(estimator) << "\n";
  out << "final_kind " << didcatt::to_string(final_kind) << "\n";
  out << "feature_map " << didcatt::to_string(map) << "\n";
  out << "ridge_penalty " << format_double(ridge_penalty) << "\n";
  out << "training_loss " << format_double(training_loss) << "\n";
  out << "x_cols " << x_cols.size();
  for (auto c : x_cols) out << ' ' << c;
  out << "\n";
  out << "x_names " << x_names.size() << "\n";
  for (const auto& nm : x_names) out << one_line(nm) << "\n";
  out << "metadata " << metadata.size() << "\n";
  for (const auto& [k, v] : metadata) out << one_line(k) << "\n" << one_line(v) << "\n";
  if (final_kind == LearnerKind::kGbt) {
    out << "gbt\n";
    ensemble.write(out);
  } else {
    out << "linear " << beta.size() << "\n";
    for (Eigen::Index i = 0; i < beta.size(); ++i) out << format_double(beta(i)) << "\n";
  }
  out << "end\n";
}

namespace {

constexpr const char* kLoadOp = "load_model";

std::string next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(kModule, kLoadOp, "unexpected end of model file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::string field(std::istream& in, const std::string& key) {
  const std::string line = next_line(in);
  if (line.rfind(key + " ", 0) != 0 && line != key)
    throw Error(kModule, kLoadOp, "expected '" + key + "', found '" + line + "'");
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

double number(const std::string& text) {
  auto v = parse_double(text);
  if (!v) throw Error(kModule, kLoadOp, "malformed number '" + text + "'");
  return *v;
}

std::size_t count(const std::string& text) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(kModule, kLoadOp, "malformed count '" + text + "'");
  }
}

}  // namespace

CattModel CattModel::load(std::istream& in) {
  if (next_line(in) != kMagic) throw Error(kModule, kLoadOp, "not a model file (missing version header)");
  CattModel m;
  m.estimator = field(in, "estimator");
  m.final_kind = learner_kind_from_string(field(in, "final_kind"));
  if (m.final_kind != LearnerKind::kLinear && m.final_kind != LearnerKind::kGbt)
    throw Error(kModule, kLoadOp, "unsupported final kind");
  m.map = feature_map_from_string(field(in, "feature_map"));
  m.ridge_penalty = number(field(in, "ridge_penalty"));
  m.training_loss = number(field(in, "training_loss"));
  {
    std::istringstream cols(field(in, "x_cols"));
    std::size_t k = 0;
    cols >> k;
    m.x_cols.resize(k);
    for (auto& c : m.x_cols) cols >> c;
    if (!cols) throw Error(kModule, kLoadOp, "malformed x_cols line");
  }
  const std::size_t nx = count(field(in, "x_names"));
  for (std::size_t i = 0; i < nx; ++i) m.x_names.push_back(next_line(in));
  const std::size_t nm = count(field(in, "metadata"));
  for (std::size_t i = 0; i < nm; ++i) {
    std::string k = next_line(in);
    m.metadata.emplace_back(std::move(k), next_line(in));
  }
  if (m.final_kind == LearnerKind::kGbt) {
    field(in, "gbt");
    m.ensemble = GbtEnsemble::read(in);
    std::string rest;
    std::getline(in, rest);
  } else {
    const std::size_t q = count(field(in, "linear"));
    m.beta.resize(static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < q; ++i) m.beta(static_cast<Eigen::Index>(i)) = number(next_line(in));
    if (q != feature_names(m.x_names, m.map).size())
      throw Error(kModule, kLoadOp, "coefficient count does not match the feature map");
  }
  if (next_line(in) != "end") throw Error(kModule, kLoadOp, "missing end marker");
  return m;
}

std::string CattModel::to_string() const {
  std::ostringstream ss;
  save(ss);
  return ss.str();
}

}  // namespace didcatt
