#include "didcatt/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"

namespace didcatt {

namespace {

constexpr const char* kModule = "panel_data";

// Numeric ordering when every label parses as a number, lexicographic otherwise.
std::vector<std::string> sorted_labels(std::vector<std::string> labels) {
  bool numeric = std::all_of(labels.begin(), labels.end(),
                             [](const std::string& s) { return parse_double(s).has_value(); });
  if (numeric) {
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return *parse_double(a) < *parse_double(b);
    });
  } else {
    std::sort(labels.begin(), labels.end());
  }
  return labels;
}

}  // namespace

bool operator==(const UnitRecord& a, const UnitRecord& b) {
  return a.id == b.id && a.outcomes == b.outcomes && a.cohort == b.cohort &&
         a.covariates == b.covariates && a.instrument == b.instrument &&
         a.treatments == b.treatments;
}

bool operator==(const PanelDataset& a, const PanelDataset& b) {
  return a.units_ == b.units_ && a.period_labels_ == b.period_labels_ &&
         a.covariate_names_ == b.covariate_names_;
}

PanelDataset::PanelDataset(std::vector<UnitRecord> units, std::vector<std::string> period_labels,
                           std::vector<std::string> covariate_names)
    : units_(std::move(units)),
      period_labels_(std::move(period_labels)),
      covariate_names_(std::move(covariate_names)) {
  const std::size_t t = period_labels_.size();
  if (t == 0) throw Error(kModule, "PanelDataset", "panel has no periods");
  if (units_.empty()) throw Error(kModule, "PanelDataset", "panel has no units");
  const bool with_z = units_.front().instrument.has_value();
  const bool with_d = !units_.front().treatments.empty();
  for (const auto& u : units_) {
    if (u.outcomes.size() != t)
      throw Error(kModule, "PanelDataset",
                  "unbalanced panel: unit '" + u.id + "' has " + std::to_string(u.outcomes.size()) +
                      " of " + std::to_string(t) + " periods");
    if (u.cohort == 0)
      throw Error(kModule, "PanelDataset", "unit '" + u.id + "' is treated at period 0");
    if (u.cohort != kNeverTreated && (u.cohort < 0 || static_cast<std::size_t>(u.cohort) >= t))
      throw Error(kModule, "PanelDataset", "unit '" + u.id + "' has cohort outside the panel");
    if (u.covariates.size() != covariate_names_.size())
      throw Error(kModule, "PanelDataset", "unit '" + u.id + "' has wrong covariate arity");
    for (double v : u.outcomes)
      if (!std::isfinite(v)) throw Error(kModule, "PanelDataset", "non-finite outcome in unit '" + u.id + "'");
    if (u.instrument.has_value() != with_z)
      throw Error(kModule, "PanelDataset", "instrument present on some units only");
    if (u.instrument && *u.instrument != 0 && *u.instrument != 1)
      throw Error(kModule, "PanelDataset", "instrument must be 0/1 (unit '" + u.id + "')");
    if (u.treatments.empty() == with_d || (with_d && u.treatments.size() != t))
      throw Error(kModule, "PanelDataset", "treatment path missing or unbalanced (unit '" + u.id + "')");
  }
}

bool PanelDataset::has_instrument() const { return units_.front().instrument.has_value(); }
bool PanelDataset::has_treatments() const { return !units_.front().treatments.empty(); }

Matrix PanelDataset::covariate_matrix() const {
  Matrix w(static_cast<Eigen::Index>(units_.size()), static_cast<Eigen::Index>(num_covariates()));
  for (std::size_t i = 0; i < units_.size(); ++i)
    for (std::size_t j = 0; j < num_covariates(); ++j)
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = units_[i].covariates[j];
  return w;
}

// ---------------------------------------------------------------------------
// CSV ingest

PanelDataset parse_panel_csv(std::string_view text, const PanelSchema& schema) {
  constexpr const char* op = "load_panel_csv";
  const CsvTable table = parse_csv(text);
  const std::size_t c_unit = table.require(schema.unit, kModule, op);
  const std::size_t c_period = table.require(schema.period, kModule, op);
  const std::size_t c_outcome = table.require(schema.outcome, kModule, op);
  std::optional<std::size_t> c_cohort;
  if (schema.cohort) c_cohort = table.require(*schema.cohort, kModule, op);
  std::vector<std::size_t> c_cov;
  for (const auto& name : schema.covariates) c_cov.push_back(table.require(name, kModule, op));
  std::optional<std::size_t> c_z, c_d;
  if (schema.instrument) c_z = table.require(*schema.instrument, kModule, op);
  if (schema.treatment) c_d = table.require(*schema.treatment, kModule, op);

  std::vector<std::string> periods;
  std::vector<std::string> unit_ids;
  {
    std::set<std::string> seen_p, seen_u;
    for (const auto& r : table.rows) {
      if (seen_p.insert(r[c_period]).second) periods.push_back(r[c_period]);
      if (seen_u.insert(r[c_unit]).second) unit_ids.push_back(r[c_unit]);
    }
  }
  periods = sorted_labels(std::move(periods));
  unit_ids = sorted_labels(std::move(unit_ids));
  std::map<std::string, std::size_t> period_index, unit_index;
  for (std::size_t i = 0; i < periods.size(); ++i) period_index[periods[i]] = i;
  for (std::size_t i = 0; i < unit_ids.size(); ++i) unit_index[unit_ids[i]] = i;

  const std::size_t t = periods.size();
  const double nan = std::nan("");
  struct Partial {
    UnitRecord rec;
    std::vector<bool> seen;
    std::optional<std::string> cohort_label;
    bool has_cov = false;
  };
  std::vector<Partial> partial(unit_ids.size());
  for (std::size_t i = 0; i < unit_ids.size(); ++i) {
    partial[i].rec.id = unit_ids[i];
    partial[i].rec.outcomes.assign(t, nan);
    partial[i].seen.assign(t, false);
    if (c_d) partial[i].rec.treatments.assign(t, nan);
  }

  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const auto& r = table.rows[row];
    const std::string where = " (data row " + std::to_string(row + 1) + ")";
    Partial& p = partial[unit_index.at(r[c_unit])];
    const std::size_t per = period_index.at(r[c_period]);
    if (p.seen[per])
      throw Error(kModule, op, "duplicate (unit, period) for unit '" + p.rec.id + "'" + where);
    p.seen[per] = true;
    auto y = parse_double(r[c_outcome]);
    if (!y || !std::isfinite(*y)) throw Error(kModule, op, "non-numeric outcome" + where);
    p.rec.outcomes[per] = *y;

    if (c_cohort) {
      const std::string& lab = r[*c_cohort];
      if (p.cohort_label && *p.cohort_label != lab)
        throw Error(kModule, op, "cohort changes over time for unit '" + p.rec.id + "'");
      p.cohort_label = lab;
    }
    std::vector<double> cov;
    for (std::size_t j = 0; j < c_cov.size(); ++j) {
      auto v = parse_double(r[c_cov[j]]);
      if (!v || !std::isfinite(*v))
        throw Error(kModule, op,
                    "non-numeric covariate '" + schema.covariates[j] + "' value '" + r[c_cov[j]] + "'" + where);
      cov.push_back(*v);
    }
    if (p.has_cov && cov != p.rec.covariates)
      throw Error(kModule, op, "covariates vary over time for unit '" + p.rec.id + "'");
    p.rec.covariates = std::move(cov);
    p.has_cov = true;
    if (c_z) {
      auto z = parse_double(r[*c_z]);
      if (!z || (*z != 0.0 && *z != 1.0)) throw Error(kModule, op, "instrument must be 0/1" + where);
      if (p.rec.instrument && *p.rec.instrument != static_cast<int>(*z))
        throw Error(kModule, op, "instrument changes over time for unit '" + p.rec.id + "'");
      p.rec.instrument = static_cast<int>(*z);
    }
    if (c_d) {
      auto dv = parse_double(r[*c_d]);
      if (!dv || (*dv != 0.0 && *dv != 1.0)) throw Error(kModule, op, "treatment must be 0/1" + where);
      p.rec.treatments[per] = *dv;
    }
  }

  std::vector<UnitRecord> units;
  units.reserve(partial.size());
  for (auto& p : partial) {
    for (std::size_t per = 0; per < t; ++per)
      if (!p.seen[per])
        throw Error(kModule, op,
                    "unbalanced panel: unit '" + p.rec.id + "' lacks period '" + periods[per] + "'");
    if (p.cohort_label && *p.cohort_label != kNeverSentinel) {
      auto it = period_index.find(*p.cohort_label);
      if (it == period_index.end()) {
        // Accept numerically equal spellings such as "2" vs "2.0".
        auto cv = parse_double(*p.cohort_label);
        for (const auto& [label, idx] : period_index) {
          auto pv = parse_double(label);
          if (cv && pv && *cv == *pv) it = period_index.find(label);
        }
      }
      if (it == period_index.end())
        throw Error(kModule, op, "cohort '" + *p.cohort_label + "' of unit '" + p.rec.id +
                                     "' is not an observed period");
      if (it->second == 0)
        throw Error(kModule, op, "unit '" + p.rec.id + "' is treated at period 0");
      p.rec.cohort = static_cast<int>(it->second);
    }
    units.push_back(std::move(p.rec));
  }
  return PanelDataset(std::move(units), std::move(periods), schema.covariates);
}

PanelDataset load_panel_csv(const std::filesystem::path& path, const PanelSchema& schema) {
  const CsvTable table = read_csv(path);
  return parse_panel_csv(to_csv_string(table), schema);
}

std::string panel_to_csv(const PanelDataset& data, const PanelSchema& schema) {
  CsvTable t;
  t.header = {schema.unit, schema.period, schema.outcome};
  if (schema.cohort) t.header.push_back(*schema.cohort);
  for (const auto& c : data.covariate_names()) t.header.push_back(c);
  if (schema.instrument) t.header.push_back(*schema.instrument);
  if (schema.treatment) t.header.push_back(*schema.treatment);
  for (const auto& u : data.units()) {
    for (std::size_t per = 0; per < data.num_periods(); ++per) {
      std::vector<std::string> row = {u.id, data.period_labels()[per], format_double(u.outcomes[per])};
      if (schema.cohort)
        row.push_back(u.cohort == kNeverTreated ? kNeverSentinel
                                                : data.period_labels()[static_cast<std::size_t>(u.cohort)]);
      for (double c : u.covariates) row.push_back(format_double(c));
      if (schema.instrument) row.push_back(std::to_string(u.instrument.value_or(0)));
      if (schema.treatment) row.push_back(format_double(u.treatments.empty() ? 0.0 : u.treatments[per]));
      t.rows.push_back(std::move(row));
    }
  }
  return to_csv_string(t);
}

// ---------------------------------------------------------------------------
// Views

Matrix TwoPeriodView::x() const { return select_cols(w, x_cols); }

std::vector<std::string> TwoPeriodView::x_names() const {
  std::vector<std::string> out;
  for (auto c : x_cols) out.push_back(c < w_names.size() ? w_names[c] : "x" + std::to_string(c));
  return out;
}

TwoPeriodView TwoPeriodView::subset(std::span<const std::size_t> rows) const {
  TwoPeriodView v;
  v.w = select_rows(w, rows);
  v.x_cols = x_cols;
  v.d = select_rows(d, rows);
  v.s = select_rows(s, rows);
  for (auto r : rows) v.source_unit.push_back(source_unit.at(r));
  v.w_names = w_names;
  return v;
}

void TwoPeriodView::validate() const {
  constexpr const char* op = "TwoPeriodView";
  const auto n = s.size();
  if (w.rows() != n || d.size() != n || source_unit.size() != static_cast<std::size_t>(n))
    throw Error(kModule, op, "misaligned view arrays");
  for (std::size_t i = 0; i < x_cols.size(); ++i) {
    if (x_cols[i] >= static_cast<std::size_t>(w.cols()))
      throw Error(kModule, op, "x_cols index out of bounds");
    if (i > 0 && x_cols[i] <= x_cols[i - 1])
      throw Error(kModule, op, "x_cols must be strictly increasing");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) != 0.0 && d(i) != 1.0) throw Error(kModule, op, "D must be 0/1");
    if (!std::isfinite(s(i))) throw Error(kModule, op, "S must be finite");
  }
}

namespace {

void check_x_cols(const std::vector<std::size_t>& x_cols, std::size_t p, const char* op) {
  for (std::size_t i = 0; i < x_cols.size(); ++i) {
    if (x_cols[i] >= p)
      throw Error(kModule, op, "x_cols index " + std::to_string(x_cols[i]) + " out of bounds (W has " +
                                   std::to_string(p) + " columns)");
    if (i > 0 && x_cols[i] <= x_cols[i - 1])
      throw Error(kModule, op, "x_cols must be strictly increasing");
  }
}

}  // namespace

TwoPeriodView two_period(const PanelDataset& data, std::size_t pre, std::size_t post,
                         const std::vector<std::size_t>& x_cols, Transform transform) {
  constexpr const char* op = "two_period";
  const std::size_t t = data.num_periods();
  if (t < 2) throw Error(kModule, op, "need at least two periods");
  if (!(pre < post) || post >= t) throw Error(kModule, op, "require pre < post < T");
  const std::size_t p = data.num_covariates();
  check_x_cols(x_cols, p, op);

  const std::size_t n = data.num_units();
  const bool lagged = transform == Transform::kLaggedOutcome;
  TwoPeriodView v;
  v.w.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + (lagged ? 1 : 0)));
  v.d.resize(static_cast<Eigen::Index>(n));
  v.s.resize(static_cast<Eigen::Index>(n));
  v.x_cols = x_cols;
  v.w_names = data.covariate_names();
  if (lagged) v.w_names.push_back("y_pre");
  for (std::size_t i = 0; i < n; ++i) {
    const UnitRecord& u = data.unit(i);
    const auto ii = static_cast<Eigen::Index>(i);
    if (u.cohort != kNeverTreated) {
      const auto g = static_cast<std::size_t>(u.cohort);
      if (g > pre && g < post)
        throw Error(kModule, op, "unit '" + u.id + "' has cohort strictly between pre and post (ambiguous group)");
      if (g <= pre) throw Error(kModule, op, "unit '" + u.id + "' is already treated at the pre period");
      if (g > post)
        throw Error(kModule, op, "unit '" + u.id + "' is first treated after the post period");
    }
    for (std::size_t j = 0; j < p; ++j) v.w(ii, static_cast<Eigen::Index>(j)) = u.covariates[j];
    v.d(ii) = u.cohort == static_cast<int>(post) ? 1.0 : 0.0;
    if (lagged) {
      v.w(ii, static_cast<Eigen::Index>(p)) = u.outcomes[pre];
      v.s(ii) = u.outcomes[post];
    } else {
      v.s(ii) = u.outcomes[post] - u.outcomes[pre];
    }
    v.source_unit.push_back(u.id);
  }
  return v;
}

TwoPeriodView event_study_expand(const PanelDataset& data, const std::vector<std::size_t>& x_cols,
                                 bool include_cohort) {
  constexpr const char* op = "event_study_expand";
  const std::size_t t = data.num_periods();
  if (t < 2) throw Error(kModule, op, "need at least two periods");
  const std::size_t p = data.num_covariates();
  check_x_cols(x_cols, p, op);

  std::set<std::pair<int, int>> cells;  // (g, t)
  std::size_t n_never = 0, n_treated = 0;
  for (const auto& u : data.units()) {
    if (u.cohort == kNeverTreated) {
      ++n_never;
      continue;
    }
    ++n_treated;
    for (int per = u.cohort; per < static_cast<int>(t); ++per) cells.insert({u.cohort, per});
  }
  if (n_never == 0) throw Error(kModule, op, "no never-treated units");
  if (n_treated == 0) throw Error(kModule, op, "no treated units");

  const std::size_t extra = include_cohort ? 2 : 1;
  struct Row {
    std::size_t unit;
    int g;
    int per;
    double d;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < data.num_units(); ++i) {
    const UnitRecord& u = data.unit(i);
    if (u.cohort == kNeverTreated) {
      for (const auto& [g, per] : cells) rows.push_back({i, g, per, 0.0});
    } else {
      for (int per = u.cohort; per < static_cast<int>(t); ++per) rows.push_back({i, u.cohort, per, 1.0});
    }
  }

  TwoPeriodView v;
  const auto n = static_cast<Eigen::Index>(rows.size());
  v.w.resize(n, static_cast<Eigen::Index>(p + extra));
  v.d.resize(n);
  v.s.resize(n);
  v.x_cols = x_cols;
  v.x_cols.push_back(p);
  if (include_cohort) v.x_cols.push_back(p + 1);
  v.w_names = data.covariate_names();
  v.w_names.push_back("event_time");
  if (include_cohort) v.w_names.push_back("cohort");
  for (Eigen::Index r = 0; r < n; ++r) {
    const Row& row = rows[static_cast<std::size_t>(r)];
    const UnitRecord& u = data.unit(row.unit);
    for (std::size_t j = 0; j < p; ++j) v.w(r, static_cast<Eigen::Index>(j)) = u.covariates[j];
    v.w(r, static_cast<Eigen::Index>(p)) = static_cast<double>(row.per - row.g);
    if (include_cohort) v.w(r, static_cast<Eigen::Index>(p + 1)) = static_cast<double>(row.g);
    v.d(r) = row.d;
    v.s(r) = u.outcomes[static_cast<std::size_t>(row.per)] - u.outcomes[0];
    v.source_unit.push_back(u.id);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldAssignment::rows_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::rows_not_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment assign_folds(std::size_t n, std::size_t k, std::uint64_t seed,
                            std::span<const double> d, bool strict) {
  constexpr const char* op = "assign_folds";
  if (k < 2) throw Error(kModule, op, "need K >= 2 folds");
  if (k > n) throw Error(kModule, op, "K = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  if (d.size() != n) throw Error(kModule, op, "group indicator length differs from n");

  std::vector<std::size_t> treated, control;
  for (std::size_t i = 0; i < n; ++i) (d[i] != 0.0 ? treated : control).push_back(i);
  if (strict && (treated.size() < k || control.size() < k))
    throw Error(kModule, op, "a group has fewer than K members under strict stratification");

  Rng rng(splitmix64(seed));
  shuffle_indices(treated, rng);
  shuffle_indices(control, rng);

  FoldAssignment fa;
  fa.n = n;
  fa.k = k;
  fa.seed = seed;
  fa.fold_of.assign(n, -1);
  for (std::size_t j = 0; j < treated.size(); ++j) fa.fold_of[treated[j]] = static_cast<int>(j % k);
  // Controls continue the deal where treated rows stopped, balancing fold sizes.
  const std::size_t offset = treated.size() % k;
  for (std::size_t j = 0; j < control.size(); ++j)
    fa.fold_of[control[j]] = static_cast<int>((offset + j) % k);
  return fa;
}

}  // namespace didcatt
