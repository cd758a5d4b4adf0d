#include "didcatt/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "didcatt/error.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "nuisance";

double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

struct Standardizer {
  Vector center, scale;
  std::vector<bool> constant;
};

Standardizer standardize_stats(const Matrix& x) {
  const auto n = static_cast<double>(x.rows());
  Standardizer s;
  s.center = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  s.constant.assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.center(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.center(j))))) {
      s.scale(j) = 1.0;
      s.constant[static_cast<std::size_t>(j)] = true;
    } else {
      s.scale(j) = sd;
    }
  }
  return s;
}

Matrix apply_standardizer(const Matrix& x, const Vector& center, const Vector& scale) {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

void check_finite(const Vector& v, const char* op, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i))) throw Error(kModule, op, std::string("non-finite ") + what + " at row " + std::to_string(i));
}

std::vector<int> cv_fold_ids(std::size_t n, int k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(splitmix64(seed ^ 0x63765f666f6c6473ULL));
  shuffle_indices(idx, rng);
  std::vector<int> fold(n);
  for (std::size_t j = 0; j < n; ++j) fold[idx[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  return fold;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kRidge: return "ridge";
    case LearnerKind::kLasso: return "lasso";
    case LearnerKind::kLogistic: return "logistic";
    case LearnerKind::kGbtSquared: return "gbt_squared";
    case LearnerKind::kGbtLogistic: return "gbt_logistic";
    case LearnerKind::kLinear: return "linear";
    case LearnerKind::kGbt: return "gbt";
  }
  return "?";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  for (auto k : {LearnerKind::kRidge, LearnerKind::kLasso, LearnerKind::kLogistic, LearnerKind::kGbtSquared,
                 LearnerKind::kGbtLogistic, LearnerKind::kLinear, LearnerKind::kGbt})
    if (to_string(k) == name) return k;
  throw Error(kModule, "LearnerSpec", "unknown learner kind '" + name + "'");
}

std::string to_string(FeatureMap map) { return map == FeatureMap::kRaw ? "raw" : "quadratic"; }

FeatureMap feature_map_from_string(const std::string& name) {
  if (name == "raw") return FeatureMap::kRaw;
  if (name == "quadratic") return FeatureMap::kQuadratic;
  throw Error("catt_core", "LearnerSpec", "unknown feature map '" + name + "'");
}

void LearnerSpec::validate() const {
  constexpr const char* op = "LearnerSpec";
  if (!(lambda >= 0.0)) throw Error(kModule, op, "penalty must be >= 0");
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw Error(kModule, op, "penalty grid values must be >= 0");
  if (max_depth < 1) throw Error(kModule, op, "tree depth must be >= 1");
  if (rounds < 1) throw Error(kModule, op, "boosting rounds must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw Error(kModule, op, "learning rate must lie in (0, 1]");
  if (cv_folds == 1 || cv_folds < 0) throw Error(kModule, op, "CV fold count must be 0 (off) or >= 2");
  if (cv_folds >= 2 && lambda_grid.empty()) throw Error(kModule, op, "empty penalty grid with CV requested");
  if (!(reg_lambda >= 0.0) || !(min_child_weight >= 0.0)) throw Error(kModule, op, "tree regularizers must be >= 0");
}

GbtParams LearnerSpec::gbt_params() const {
  GbtParams p;
  p.max_depth = max_depth;
  p.rounds = rounds;
  p.learning_rate = learning_rate;
  p.reg_lambda = reg_lambda;
  p.min_child_hessian = min_child_weight;
  p.early_stop_patience = early_stop_patience;
  p.seed = seed;
  return p;
}

Vector LinearPredictor::predict(const Matrix& x) const {
  if (x.cols() != coef.size()) throw Error(kModule, "predict", "feature arity mismatch");
  return (apply_standardizer(x, center, scale) * coef).array() + intercept;
}

std::pair<double, Vector> LinearPredictor::raw_coefficients() const {
  Vector slopes = coef.array() / scale.array();
  return {intercept - center.dot(slopes), slopes};
}

Vector RegressionModel::predict(const Matrix& x) const {
  return std::visit([&](const auto& m) { return m.predict(x); }, impl_);
}

Vector PropensityModel::predict_unclipped(const Matrix& x) const {
  Vector score = std::visit([&](const auto& m) { return m.predict(x); }, impl_);
  return score.unaryExpr([](double z) { return sigmoid(z); });
}

Vector PropensityModel::predict(const Matrix& x, double clip) const {
  if (!(clip >= 0.0 && clip < 0.5)) throw Error(kModule, "predict", "clip must lie in [0, 0.5)");
  return predict_unclipped(x).unaryExpr([clip](double p) { return std::clamp(p, clip, 1.0 - clip); });
}

// ---------------------------------------------------------------------------
// Ridge

LinearPredictor fit_ridge(const Matrix& x, const Vector& y, double lambda) {
  constexpr const char* op = "fit_regression";
  LinearPredictor out;
  const auto p = x.cols();
  out.center = x.colwise().mean().transpose();
  out.scale = Vector::Ones(p);
  const double ybar = y.mean();
  out.intercept = ybar;
  if (p == 0) {
    out.coef = Vector(0);
    return out;
  }
  const Matrix xc = x.rowwise() - out.center.transpose();
  const Vector yc = y.array() - ybar;
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(xc);
    qr.setThreshold(1e-10);
    if (qr.rank() < p)
      throw Error(kModule, op, "singular least-squares system at lambda = 0 (rank " + std::to_string(qr.rank()) +
                                   " < " + std::to_string(p) + "); use a positive penalty");
    out.coef = qr.solve(yc);
  } else {
    Matrix a = xc.transpose() * xc;
    a.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw Error(kModule, op, "ridge normal equations not positive definite");
    out.coef = llt.solve(xc.transpose() * yc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lasso: minimizes (1/2n)||y - b0 - Z b||^2 + lambda ||b||_1 on standardized Z.

LinearPredictor fit_lasso(const Matrix& x, const Vector& y, double lambda, double tol, int max_sweeps) {
  const auto n = x.rows();
  const auto p = x.cols();
  const Standardizer st = standardize_stats(x);
  const Matrix z = apply_standardizer(x, st.center, st.scale);
  LinearPredictor out;
  out.center = st.center;
  out.scale = st.scale;
  out.intercept = y.mean();
  out.coef = Vector::Zero(p);
  Vector r = y.array() - out.intercept;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (st.constant[static_cast<std::size_t>(j)]) continue;
      const double bj = out.coef(j);
      const double rho = inv_n * z.col(j).dot(r) + bj;
      const double nb = rho > lambda ? rho - lambda : (rho < -lambda ? rho + lambda : 0.0);
      const double delta = nb - bj;
      if (delta != 0.0) {
        r.noalias() -= delta * z.col(j);
        out.coef(j) = nb;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < tol) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression by IRLS with step halving.

LogisticFit fit_logistic_irls(const Matrix& x, const Vector& y, double lambda) {
  constexpr const char* op = "fit_propensity";
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-8;
  const auto n = x.rows();
  const auto p = x.cols();
  const Standardizer st = standardize_stats(x);
  Matrix a(n, p + 1);
  a.col(0).setOnes();
  a.rightCols(p) = apply_standardizer(x, st.center, st.scale);
  for (Eigen::Index j = 0; j < p; ++j)
    if (st.constant[static_cast<std::size_t>(j)]) a.col(j + 1).setZero();

  const double pen = lambda * static_cast<double>(n);
  auto objective = [&](const Vector& beta) {
    const Vector eta = a * beta;
    double f = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) f += softplus(eta(i)) - y(i) * eta(i);
    return f + 0.5 * pen * beta.tail(p).squaredNorm();
  };

  Vector beta = Vector::Zero(p + 1);
  const double ybar = std::clamp(y.mean(), 1e-6, 1 - 1e-6);
  beta(0) = logit(ybar);
  double f = objective(beta);
  LogisticFit out;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    const Vector eta = a * beta;
    Vector prob = eta.unaryExpr([](double e) { return sigmoid(e); });
    Vector w = prob.array() * (1.0 - prob.array());
    Matrix h = a.transpose() * w.asDiagonal() * a;
    h.diagonal().tail(p).array() += pen;
    h.diagonal().array() += 1e-10;
    Vector g = a.transpose() * (y - prob);
    g.tail(p) -= pen * beta.tail(p);
    Eigen::LDLT<Matrix> ldlt(h);
    const Vector step = ldlt.solve(g);
    if (!step.allFinite()) throw Error(kModule, op, "IRLS produced a non-finite Newton step");

    double t = 1.0;
    Vector cand = beta + step;
    double fc = objective(cand);
    int halvings = 0;
    while (!(fc <= f + 1e-12 * std::abs(f)) && halvings < 40) {
      t *= 0.5;
      cand = beta + t * step;
      fc = objective(cand);
      ++halvings;
    }
    if (!std::isfinite(fc) || !cand.allFinite())
      throw Error(kModule, op, "IRLS diverged: non-finite objective after step halving");
    if (!(fc <= f + 1e-12 * std::abs(f))) {
      if ((t * step).cwiseAbs().maxCoeff() < kTol) {
        out.converged = true;
        break;
      }
      throw Error(kModule, op, "IRLS diverged: step halving could not decrease the deviance");
    }
    const double max_change = (cand - beta).cwiseAbs().maxCoeff();
    beta = cand;
    f = fc;
    if (max_change < kTol) {
      out.converged = true;
      ++iter;
      break;
    }
  }
  out.iterations = iter;
  out.predictor.center = st.center;
  out.predictor.scale = st.scale;
  out.predictor.intercept = beta(0);
  out.predictor.coef = beta.tail(p);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation over a penalty grid

std::vector<double> cv_losses(const Matrix& x, const Vector& y, const LearnerSpec& spec) {
  const auto n = static_cast<std::size_t>(x.rows());
  const int k = spec.cv_folds;
  if (k < 2 || spec.lambda_grid.empty()) throw Error(kModule, "cv", "empty penalty grid with CV requested");
  if (n < static_cast<std::size_t>(k)) throw Error(kModule, "cv", "fewer rows than CV folds");
  const auto fold = cv_fold_ids(n, k, spec.seed);
  const bool classify = spec.kind == LearnerKind::kLogistic;
  std::vector<double> total(spec.lambda_grid.size(), 0.0);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? te : tr).push_back(i);
    const Matrix xtr = select_rows(x, tr), xte = select_rows(x, te);
    const Vector ytr = select_rows(y, tr), yte = select_rows(y, te);
    if (classify && (ytr.maxCoeff() == ytr.minCoeff())) continue;
    for (std::size_t g = 0; g < spec.lambda_grid.size(); ++g) {
      const double lam = spec.lambda_grid[g];
      double loss = 0.0;
      if (classify) {
        const Vector pr = fit_logistic_irls(xtr, ytr, lam).predictor.predict(xte).unaryExpr(
            [](double e) { return std::clamp(sigmoid(e), 1e-12, 1 - 1e-12); });
        for (Eigen::Index i = 0; i < yte.size(); ++i)
          loss -= yte(i) * std::log(pr(i)) + (1 - yte(i)) * std::log(1 - pr(i));
      } else {
        LinearPredictor lp;
        if (spec.kind == LearnerKind::kLasso) {
          lp = fit_lasso(xtr, ytr, lam);
        } else {
          // lambda = 0 on a singular fold is penalized rather than fatal
          try {
            lp = fit_ridge(xtr, ytr, lam);
          } catch (const Error&) {
            total[g] = std::numeric_limits<double>::infinity();
            continue;
          }
        }
        loss = (lp.predict(xte) - yte).squaredNorm();
      }
      total[g] += loss;
    }
  }
  for (auto& t : total) t /= static_cast<double>(n);
  return total;
}

namespace {

double choose_lambda(const Matrix& x, const Vector& y, const LearnerSpec& spec) {
  if (spec.cv_folds < 2) return spec.lambda;
  const auto losses = cv_losses(x, y, spec);
  // Ties go to the larger penalty (simpler model).
  std::size_t best = 0;
  for (std::size_t g = 1; g < losses.size(); ++g) {
    if (losses[g] < losses[best] ||
        (losses[g] == losses[best] && spec.lambda_grid[g] > spec.lambda_grid[best]))
      best = g;
  }
  if (!std::isfinite(losses[best])) throw Error(kModule, "cv", "no penalty in the grid gave a finite CV loss");
  return spec.lambda_grid[best];
}

}  // namespace

RegressionModel fit_regression(const Matrix& features, const Vector& labels, const LearnerSpec& spec) {
  constexpr const char* op = "fit_regression";
  spec.validate();
  if (features.rows() != labels.size()) throw Error(kModule, op, "features and labels have different lengths");
  if (labels.size() < 2) throw Error(kModule, op, "need at least two rows");
  check_finite(labels, op, "label");
  switch (spec.kind) {
    case LearnerKind::kRidge: {
      const double lam = choose_lambda(features, labels, spec);
      return RegressionModel(fit_ridge(features, labels, lam), lam);
    }
    case LearnerKind::kLasso: {
      const double lam = choose_lambda(features, labels, spec);
      return RegressionModel(fit_lasso(features, labels, lam), lam);
    }
    case LearnerKind::kGbtSquared: {
      GbtObjective obj;
      obj.grad_hess = [&labels](std::size_t i, double f) {
        return std::pair{f - labels(static_cast<Eigen::Index>(i)), 1.0};
      };
      obj.loss = [&labels](std::size_t i, double f) {
        const double r = f - labels(static_cast<Eigen::Index>(i));
        return 0.5 * r * r;
      };
      return RegressionModel(fit_gbt(features, obj, labels.mean(), spec.gbt_params()).model);
    }
    default:
      throw Error(kModule, op, "learner kind '" + to_string(spec.kind) + "' is not a regression learner");
  }
}

PropensityModel fit_propensity(const Matrix& features, const Vector& labels, const LearnerSpec& spec) {
  constexpr const char* op = "fit_propensity";
  spec.validate();
  if (features.rows() != labels.size()) throw Error(kModule, op, "features and labels have different lengths");
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 0.0) has0 = true;
    else if (labels(i) == 1.0) has1 = true;
    else throw Error(kModule, op, "propensity labels must be 0/1");
  }
  if (!(has0 && has1)) throw Error(kModule, op, "propensity labels contain a single class");
  switch (spec.kind) {
    case LearnerKind::kLogistic: {
      const double lam = choose_lambda(features, labels, spec);
      LogisticFit fit = fit_logistic_irls(features, labels, lam);
      return PropensityModel(std::move(fit.predictor), fit.converged, fit.iterations, lam);
    }
    case LearnerKind::kGbtLogistic: {
      GbtObjective obj;
      obj.grad_hess = [&labels](std::size_t i, double f) {
        const double p = sigmoid(f);
        return std::pair{p - labels(static_cast<Eigen::Index>(i)), std::max(p * (1 - p), 1e-12)};
      };
      obj.loss = [&labels](std::size_t i, double f) {
        return softplus(f) - labels(static_cast<Eigen::Index>(i)) * f;
      };
      return PropensityModel(fit_gbt(features, obj, logit(labels.mean()), spec.gbt_params()).model);
    }
    default:
      throw Error(kModule, op, "learner kind '" + to_string(spec.kind) + "' is not a propensity learner");
  }
}

}  // namespace didcatt
