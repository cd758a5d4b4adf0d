#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "didcatt/numeric.hpp"

namespace didcatt {

inline constexpr int kNeverTreated = -1;

/// One unit of a balanced panel. Periods are normalized indices 0..T-1.
struct UnitRecord {
  std::string id;
  std::vector<double> outcomes;      // length T
  int cohort = kNeverTreated;        // first treated period index, or never
  std::vector<double> covariates;    // time-invariant W
  std::optional<int> instrument;     // exposure flag Z (IV designs)
  std::vector<double> treatments;    // D_t per period (IV designs); empty if absent
};

/// Validated, immutable long-format panel.
class PanelDataset {
 public:
  /// Validates balance, cohort range, and covariate arity.
  PanelDataset(std::vector<UnitRecord> units, std::vector<std::string> period_labels,
               std::vector<std::string> covariate_names);

  std::size_t num_units() const { return units_.size(); }
  std::size_t num_periods() const { return period_labels_.size(); }
  std::size_t num_covariates() const { return covariate_names_.size(); }
  const std::vector<UnitRecord>& units() const { return units_; }
  const UnitRecord& unit(std::size_t i) const { return units_.at(i); }
  const std::vector<std::string>& period_labels() const { return period_labels_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  bool has_instrument() const;
  bool has_treatments() const;

  /// n x d covariate matrix in unit order.
  Matrix covariate_matrix() const;

  friend bool operator==(const PanelDataset&, const PanelDataset&);

 private:
  std::vector<UnitRecord> units_;
  std::vector<std::string> period_labels_;
  std::vector<std::string> covariate_names_;
};

bool operator==(const UnitRecord& a, const UnitRecord& b);

/// Column names of the long-format CSV. The cohort column holds a period
/// label or the sentinel "never"; it may be omitted (all units never treated).
struct PanelSchema {
  std::string unit = "unit";
  std::string period = "period";
  std::string outcome = "outcome";
  std::optional<std::string> cohort = "cohort";
  std::vector<std::string> covariates;
  std::optional<std::string> instrument;
  std::optional<std::string> treatment;
};

inline constexpr const char* kNeverSentinel = "never";

PanelDataset load_panel_csv(const std::filesystem::path& path, const PanelSchema& schema);
/// Same as load_panel_csv on already-read CSV text.
PanelDataset parse_panel_csv(std::string_view text, const PanelSchema& schema);
/// Long-format CSV text for a dataset (inverse of parse_panel_csv).
std::string panel_to_csv(const PanelDataset& data, const PanelSchema& schema);

/// Canonical estimation rows (W, X ⊂ W, D, S).
struct TwoPeriodView {
  Matrix w;                              // n x p
  std::vector<std::size_t> x_cols;       // strictly increasing indices into w
  Vector d;                              // 0/1
  Vector s;                              // outcome contrast
  std::vector<std::string> source_unit;  // provenance
  std::vector<std::string> w_names;      // column labels of w

  std::size_t size() const { return static_cast<std::size_t>(s.size()); }
  Matrix x() const;
  std::vector<std::string> x_names() const;
  /// Rows subset (keeps x_cols and names).
  TwoPeriodView subset(std::span<const std::size_t> rows) const;
  /// Throws if any documented invariant is violated.
  void validate() const;
};

enum class Transform { kParallelTrends, kLaggedOutcome };

TwoPeriodView two_period(const PanelDataset& data, std::size_t pre, std::size_t post,
                         const std::vector<std::size_t>& x_cols, Transform transform);

/// Staggered-adoption expansion. Rows gain a trailing "event_time" column
/// (and "cohort" when include_cohort), both appended to x_cols.
TwoPeriodView event_study_expand(const PanelDataset& data,
                                 const std::vector<std::size_t>& x_cols,
                                 bool include_cohort);

struct FoldAssignment {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<int> fold_of;
  std::uint64_t seed = 0;

  std::vector<std::size_t> rows_in(int fold) const;
  std::vector<std::size_t> rows_not_in(int fold) const;
};

/// Stratified by d: each group is shuffled with the seed and dealt
/// round-robin, so per-fold group counts differ by at most one.
/// With strict = true, a group smaller than K is an error.
FoldAssignment assign_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                            std::span<const double> d, bool strict = false);

}  // namespace didcatt
