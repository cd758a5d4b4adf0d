#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "didcatt/gbt.hpp"
#include "didcatt/numeric.hpp"

namespace didcatt {

/// Nuisance learners (ridge .. gbt_logistic) and final-stage classes
/// (linear, gbt) share one spec type.
enum class LearnerKind { kRidge, kLasso, kLogistic, kGbtSquared, kGbtLogistic, kLinear, kGbt };

std::string to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(const std::string& name);

/// Final-stage linear feature map.
enum class FeatureMap { kRaw, kQuadratic };
std::string to_string(FeatureMap map);
FeatureMap feature_map_from_string(const std::string& name);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kRidge;
  double lambda = 0.0;               // penalty when no CV grid is used
  std::vector<double> lambda_grid;   // candidate penalties for CV
  int cv_folds = 0;                  // >= 2 turns on CV over lambda_grid
  int max_depth = 3;
  int rounds = 100;
  double learning_rate = 0.1;
  int early_stop_patience = 0;
  double reg_lambda = 1.0;
  double min_child_weight = 1.0;
  FeatureMap feature_map = FeatureMap::kRaw;
  std::uint64_t seed = 0;

  void validate() const;
  GbtParams gbt_params() const;
};

/// Affine predictor on standardized inputs:
/// f(x) = intercept + sum_j coef_j * (x_j - center_j) / scale_j.
struct LinearPredictor {
  Vector center;
  Vector scale;
  double intercept = 0.0;
  Vector coef;

  Vector predict(const Matrix& x) const;
  /// Intercept and slopes on the raw feature scale.
  std::pair<double, Vector> raw_coefficients() const;
};

class RegressionModel {
 public:
  RegressionModel() = default;
  explicit RegressionModel(LinearPredictor p, double lambda = 0.0) : impl_(std::move(p)), lambda_(lambda) {}
  explicit RegressionModel(GbtEnsemble e) : impl_(std::move(e)) {}

  Vector predict(const Matrix& x) const;
  bool is_linear() const { return std::holds_alternative<LinearPredictor>(impl_); }
  const LinearPredictor& linear() const { return std::get<LinearPredictor>(impl_); }
  const GbtEnsemble& ensemble() const { return std::get<GbtEnsemble>(impl_); }
  /// Penalty used for the final fit (after CV when requested).
  double lambda() const { return lambda_; }

 private:
  std::variant<LinearPredictor, GbtEnsemble> impl_;
  double lambda_ = 0.0;
};

class PropensityModel {
 public:
  PropensityModel() = default;
  PropensityModel(LinearPredictor p, bool converged, int iterations, double lambda)
      : impl_(std::move(p)), converged_(converged), iterations_(iterations), lambda_(lambda) {}
  explicit PropensityModel(GbtEnsemble e) : impl_(std::move(e)) {}

  /// Probabilities clipped to [clip, 1 - clip].
  Vector predict(const Matrix& x, double clip) const;
  Vector predict_unclipped(const Matrix& x) const;
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }
  double lambda() const { return lambda_; }
  bool is_linear() const { return std::holds_alternative<LinearPredictor>(impl_); }
  const LinearPredictor& linear() const { return std::get<LinearPredictor>(impl_); }

 private:
  std::variant<LinearPredictor, GbtEnsemble> impl_;
  bool converged_ = true;
  int iterations_ = 0;
  double lambda_ = 0.0;
};

RegressionModel fit_regression(const Matrix& features, const Vector& labels, const LearnerSpec& spec);
PropensityModel fit_propensity(const Matrix& features, const Vector& labels, const LearnerSpec& spec);

// Building blocks, exposed for tests and for reuse by the final stage.
LinearPredictor fit_ridge(const Matrix& x, const Vector& y, double lambda);
LinearPredictor fit_lasso(const Matrix& x, const Vector& y, double lambda, double tol = 1e-9,
                          int max_sweeps = 20000);
struct LogisticFit {
  LinearPredictor predictor;
  bool converged = false;
  int iterations = 0;
};
LogisticFit fit_logistic_irls(const Matrix& x, const Vector& y, double lambda);

/// Mean out-of-fold loss for each grid value (squared error or log-loss).
std::vector<double> cv_losses(const Matrix& x, const Vector& y, const LearnerSpec& spec);

}  // namespace didcatt
