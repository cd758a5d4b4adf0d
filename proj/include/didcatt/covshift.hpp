#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "didcatt/catt.hpp"
#include "didcatt/crossfit.hpp"

namespace didcatt {

/// Rows pooled from a source (E=0, labelled) and a target (E=1) environment.
struct ShiftView {
  Matrix w;
  std::vector<std::size_t> x_cols;
  Vector e;
  Vector y;    // label; read only on E=0 rows (target entries may hold anything)
  Vector d;    // auxiliary randomized treatment (cate_diff / cate_shift); empty if absent
  Vector s;    // auxiliary outcome for the outcome-minus moment; empty if absent
  std::optional<Vector> pi_known;  // user-supplied P(E=1 | W)
  std::vector<std::string> w_names;

  std::size_t size() const { return static_cast<std::size_t>(e.size()); }
  Matrix x() const;
  std::vector<std::string> x_names() const;
  void validate() const;
};

/// identity: m = g(W); cate_diff: m = g(1, W) - g(0, W); outcome_minus: m = S - g(W).
enum class MomentKind { kIdentity, kCateDiff, kOutcomeMinus };
std::string to_string(MomentKind kind);
MomentKind moment_kind_from_string(const std::string& name);

/// Regression values a moment may need at one row.
struct MomentInputs {
  double g = 0.0;    // g(W), or g(D_i, W) for cate_diff
  double g1 = 0.0;   // g(1, W)
  double g0 = 0.0;   // g(0, W)
  std::optional<double> s;
};

double moment_value(const MomentInputs& in, MomentKind kind);

struct RieszSpec {
  enum class Kind { kConstant, kCateShift, kUserTable } kind = Kind::kConstant;
  double value = 1.0;  // constant
  Vector q;            // cate_shift: clipped P(D=1 | W, E=1)
  double q_clip = 0.01;
  Vector table;        // user_table: one alpha per row

  static RieszSpec constant(double v);
  static RieszSpec cate_shift(Vector q, double clip);
  static RieszSpec user_table(Vector alpha);
};

/// Per-row alpha values.
Vector riesz_values(const ShiftView& view, const RieszSpec& spec);

struct ShiftNuisance {
  Vector g;    // g(W) (identity / outcome_minus) or g(D_i, W) (cate_diff)
  Vector g1;   // cate_diff only: g(1, W)
  Vector g0;   // cate_diff only: g(0, W)
  Vector pi;   // clipped P(E=1 | W)
  FoldAssignment fold;
  double clip = 0.01;
};

/// g is trained only on E=0 rows (features W, or (D, W) for cate_diff); pi on
/// all rows with label E unless the view carries pi_known.
ShiftNuisance cross_fit_shift(const ShiftView& view, MomentKind kind, std::size_t k, const LearnerSpec& g_spec,
                              const LearnerSpec& pi_spec, double clip, std::uint64_t seed, int jobs = 1);

/// Out-of-fold P(D=1 | W, E=1), trained on target rows only and clipped.
Vector cross_fit_target_treatment(const ShiftView& view, const FoldAssignment& folds, const LearnerSpec& spec,
                                  double clip, int jobs = 1);

/// y_hat = E m(Z; g) + (1 - E) (pi / (1 - pi)) alpha (Y - g). The D slot of
/// the result carries E.
PseudoOutcome covshift_pseudo_outcome(const ShiftView& view, const ShiftNuisance& nuis, const Vector& alpha,
                                      MomentKind kind);

/// Same mechanics as fit_dr_catt with E in the role of D.
CattModel fit_covshift_functional(const PseudoOutcome& pseudo, const LearnerSpec& final_spec,
                                  double ridge_penalty = -1.0);

/// The CATT problem expressed as a shift problem: E = D, Y = S on controls,
/// auxiliary S for the outcome-minus moment.
ShiftView shift_view_from_catt(const TwoPeriodView& view);

}  // namespace didcatt
