#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "didcatt/csv.hpp"
#include "didcatt/learners.hpp"
#include "didcatt/panel.hpp"

namespace didcatt {

/// Out-of-fold nuisance values aligned with a TwoPeriodView.
struct NuisanceEstimates {
  Vector g_hat;
  Vector pi_hat;  // clipped to [clip, 1 - clip]
  FoldAssignment fold;
  double clip = 0.01;
  std::string g_learner;
  std::string pi_learner;

  std::size_t size() const { return static_cast<std::size_t>(g_hat.size()); }
  void validate(std::size_t n) const;
  /// Columns g_hat, pi_hat, fold.
  CsvTable to_csv() const;

  /// Wraps externally supplied nuisance values (for example oracle functions);
  /// pi is clipped here.
  static NuisanceEstimates from_arrays(Vector g, const Vector& pi, double clip, FoldAssignment fold = {});
};

/// Folds over source units: rows sharing a source_unit share a fold, and units
/// are stratified by whether any of their rows is treated.
FoldAssignment assign_view_folds(const TwoPeriodView& view, std::size_t k, std::uint64_t seed);

/// For each fold, fits `spec` on the eligible rows outside the fold and
/// predicts the fold. `eligible` marks rows usable for training.
Vector cross_fit_regression(const Matrix& w, const Vector& labels, const std::vector<char>& eligible,
                            const FoldAssignment& folds, const LearnerSpec& spec, int jobs = 1);

/// Out-of-fold clipped propensities from all rows outside each fold.
Vector cross_fit_propensity(const Matrix& w, const Vector& labels, const FoldAssignment& folds,
                            const LearnerSpec& spec, double clip, int jobs = 1);

/// g on control rows (labels S), pi on all rows (labels D).
NuisanceEstimates cross_fit(const TwoPeriodView& view, std::size_t k, const LearnerSpec& g_spec,
                            const LearnerSpec& pi_spec, double clip, std::uint64_t seed, int jobs = 1);
/// Same, with a precomputed fold assignment.
NuisanceEstimates cross_fit(const TwoPeriodView& view, const FoldAssignment& folds, const LearnerSpec& g_spec,
                            const LearnerSpec& pi_spec, double clip, int jobs = 1);

/// Treated-arm regression g1(W) = E[S | D=1, W], fitted on treated rows only.
/// Only the CATE baselines need it.
Vector cross_fit_treated(const TwoPeriodView& view, const FoldAssignment& folds, const LearnerSpec& g1_spec,
                         int jobs = 1);

}  // namespace didcatt
