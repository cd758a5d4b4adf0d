#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "didcatt/crossfit.hpp"
#include "didcatt/gbt.hpp"
#include "didcatt/learners.hpp"
#include "didcatt/panel.hpp"

namespace didcatt {

/// Per-row DR pseudo-outcome with the group indicator it is paired with.
struct PseudoOutcome {
  Vector y_hat;
  Vector d;  // D (or E for covariate-shift instances)
  Matrix x;
  std::vector<std::size_t> x_cols;  // columns of the source W
  std::vector<std::string> x_names;
  std::string provenance;

  std::size_t size() const { return static_cast<std::size_t>(y_hat.size()); }
  PseudoOutcome subset(std::span<const std::size_t> rows) const;
};

/// ((D - pi) / (1 - pi)) * (S - g)
PseudoOutcome pseudo_outcome(const TwoPeriodView& view, const NuisanceEstimates& nuis);

/// (1/n) sum_i [D_i theta_i^2 - 2 y_hat_i theta_i]
double dr_loss(const Vector& theta, const PseudoOutcome& pseudo);
/// Same loss with explicit weight and target arrays.
double weighted_incomplete_loss(const Vector& theta, const Vector& weight, const Vector& target);

/// mean(y_hat) / mean(D)
double att(const PseudoOutcome& pseudo);

/// Design matrix for the linear final stage: intercept column first.
Matrix feature_map(const Matrix& x, FeatureMap map);
std::vector<std::string> feature_names(const std::vector<std::string>& x_names, FeatureMap map);

class CattModel {
 public:
  std::string estimator;  // dr, or, cate_or, cate_dr, covshift, clate
  LearnerKind final_kind = LearnerKind::kLinear;
  FeatureMap map = FeatureMap::kRaw;
  Vector beta;            // linear: coefficients over feature_map(x)
  GbtEnsemble ensemble;   // gbt
  double ridge_penalty = 0.0;
  double training_loss = 0.0;
  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<double> loss_trace;  // gbt: training loss before and after each round (not persisted)

  std::size_t arity() const { return x_names.size(); }
  Vector predict(const Matrix& x) const;

  void save(std::ostream& out) const;
  static CattModel load(std::istream& in);
  std::string to_string() const;
};

/// Default final-stage ridge penalty: 1e-6 * n.
double default_ridge_penalty(std::size_t n);

/// Minimizes (1/n) sum_i [w_i theta(x_i)^2 - 2 t_i theta(x_i)] over the final
/// class in `spec`. ridge_penalty < 0 selects the default. With
/// require_pd, a linear system that is not positive definite is an error
/// carrying its smallest eigenvalue.
CattModel fit_incomplete_loss(const Matrix& x, const Vector& weight, const Vector& target, const LearnerSpec& spec,
                              double ridge_penalty, bool require_pd = false);

CattModel fit_dr_catt(const PseudoOutcome& pseudo, const LearnerSpec& final_spec, double ridge_penalty = -1.0);

/// Regresses S - g_hat on X over treated rows.
CattModel fit_or_catt(const TwoPeriodView& view, const NuisanceEstimates& nuis, const LearnerSpec& final_spec,
                      double ridge_penalty = -1.0);

/// Regresses g1_hat - g_hat on X over treated rows.
CattModel fit_cate_or(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis,
                      const LearnerSpec& final_spec, double ridge_penalty = -1.0);

enum class CateDrRows { kTreated, kAll };

/// Y_DR = g1 - g0 + (D/pi - (1-D)/(1-pi)) (S - g_D).
Vector cate_dr_outcome(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis);

/// Regresses Y_DR on X over treated rows (default) or over all rows.
CattModel fit_cate_dr(const TwoPeriodView& view, const Vector& g1_hat, const NuisanceEstimates& nuis,
                      const LearnerSpec& final_spec, double ridge_penalty = -1.0,
                      CateDrRows rows = CateDrRows::kTreated);

Vector predict(const CattModel& model, const Matrix& x);

/// Index of the candidate with the smallest held-out dr_loss. Candidates are
/// expected in order of increasing model size; ties keep the earlier one.
std::size_t select_by_heldout_loss(const std::vector<CattModel>& candidates, const PseudoOutcome& heldout);

}  // namespace didcatt
