#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>

#include "didcatt/error.hpp"
#include "didcatt/parallel.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace didcatt;
using didcatt::cli::Json;

namespace {

struct Context {
  Json config;  // resolved
  std::uint64_t seed = 0;
  int jobs = 1;
  fs::path out;
  bool verbose = false;
};

void log(const Context& ctx, const std::string& msg) {
  if (ctx.verbose) std::cerr << "[didcatt] " << msg << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cli", "write", "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error("cli", "write", "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cli", "read", "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

CsvTable matrix_csv(const Matrix& m, const std::vector<std::string>& names) {
  CsvTable t;
  t.header = names;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable prediction_csv(const Vector& p) {
  CsvTable t;
  t.header = {"prediction"};
  for (double v : p) t.rows.push_back({format_double(v)});
  return t;
}

std::uint64_t child(const Context& ctx, const char* key) { return derive_seed(ctx.seed, key); }

// Data loading ----------------------------------------------------------------

struct Loaded {
  std::string kind;
  std::optional<PanelDataset> panel;
  std::optional<SimulatedPanel> sim;
  std::optional<SimulatedIv> iv;
  std::optional<ShiftView> shift;
  std::optional<SimulatedShift> shift_sim;
};

ShiftView load_shift_csv(const Json& j) {
  constexpr const char* op = "load_shift_csv";
  const CsvTable t = read_csv(j.at("path").get<std::string>());
  const auto cov = j.at("covariates").get<std::vector<std::string>>();
  if (cov.empty()) throw Error("cli", op, "data.shift_csv.covariates is empty");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  auto column = [&](const std::string& name, bool allow_missing) {
    const std::size_t c = t.require(name, "cli", op);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string& cell = t.rows[static_cast<std::size_t>(i)][c];
      const auto x = parse_double(cell);
      if (!x) {
        if (allow_missing && cell.empty()) {
          v(i) = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        throw Error("cli", op, "column " + name + ", row " + std::to_string(i + 1) + ": not a number");
      }
      v(i) = *x;
    }
    return v;
  };
  ShiftView v;
  v.w.resize(n, static_cast<Eigen::Index>(cov.size()));
  for (std::size_t k = 0; k < cov.size(); ++k) v.w.col(static_cast<Eigen::Index>(k)) = column(cov[k], false);
  v.w_names = cov;
  v.e = column(j.at("e").get<std::string>(), false);
  v.y = column(j.at("y").get<std::string>(), true);
  if (!j.at("d").is_null()) v.d = column(j.at("d").get<std::string>(), false);
  if (!j.at("s").is_null()) v.s = column(j.at("s").get<std::string>(), true);
  if (!j.at("pi").is_null()) v.pi_known = column(j.at("pi").get<std::string>(), false);
  return v;
}

Loaded load_data(const Context& ctx) {
  Loaded out;
  out.kind = cli::data_kind(ctx.config);
  const Json& j = ctx.config.at("data").at(out.kind);
  const std::uint64_t data_seed = child(ctx, "data");
  if (out.kind == "csv") {
    out.panel = load_panel_csv(j.at("path").get<std::string>(), cli::schema_from_json(j));
  } else if (out.kind == "dgp") {
    out.sim = simulate(cli::dgp_from_json(j, data_seed));
    out.panel = out.sim->panel;
  } else if (out.kind == "iv_dgp") {
    out.iv = simulate_iv(cli::iv_from_json(j, data_seed));
    out.panel = out.iv->panel;
  } else if (out.kind == "semisynthetic") {
    out.sim = semisynthetic(fs::path(j.at("base").get<std::string>()), cli::semisynth_from_json(j), data_seed);
    out.panel = out.sim->panel;
  } else if (out.kind == "shift_dgp") {
    out.shift_sim = simulate_shift(cli::shift_from_json(j, data_seed));
    out.shift = out.shift_sim->view;
  } else {
    out.shift = load_shift_csv(j);
  }
  log(ctx, "loaded data source " + out.kind);
  return out;
}

std::size_t period_index(const PanelDataset& p, const Json& label, std::size_t fallback) {
  if (label.is_null()) return fallback;
  const std::string s = label.is_string() ? label.get<std::string>() : label.dump();
  const auto& labels = p.period_labels();
  for (std::size_t t = 0; t < labels.size(); ++t)
    if (labels[t] == s) return t;
  throw Error("cli", "config", "unknown period label '" + s + "'");
}

std::vector<std::size_t> resolve_x(const std::vector<std::string>& names, const Json& x,
                                   const std::vector<std::size_t>& fallback) {
  if (x.is_null()) return fallback;
  if (!x.is_array()) throw Error("cli", "config", "x must be a list of covariate names");
  std::vector<std::size_t> cols;
  for (const auto& e : x) {
    const std::string n = e.get<std::string>();
    const auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw Error("cli", "config", "x column '" + n + "' is not a covariate");
    cols.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

std::vector<std::size_t> default_x(const Loaded& d) {
  if (d.sim) return d.sim->x_cols;
  if (d.iv) return d.iv->view.x_cols;
  std::vector<std::size_t> all(d.panel ? d.panel->num_covariates() : 0);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

TwoPeriodView catt_view(const Context& ctx, const Loaded& d) {
  if (!d.panel) throw Error("cli", "config", "mode catt needs panel data (csv, dgp or semisynthetic)");
  const PanelDataset& p = *d.panel;
  const auto x = resolve_x(p.covariate_names(), ctx.config.at("x"), default_x(d));
  const std::string tr = ctx.config.at("transform").get<std::string>();
  if (tr == "event_study") return event_study_expand(p, x, ctx.config.at("event_study_cohort").get<bool>());
  const std::size_t pre = period_index(p, ctx.config.at("pre"), 0);
  const std::size_t post = period_index(p, ctx.config.at("post"), p.num_periods() - 1);
  return two_period(p, pre, post, x, tr == "lagged_outcome" ? Transform::kLaggedOutcome : Transform::kParallelTrends);
}

struct NuisanceBundle {
  NuisanceEstimates nuis;
  Vector g1;
};

NuisanceBundle catt_nuisance(const Context& ctx, const TwoPeriodView& view, bool need_g1) {
  const Json& nu = ctx.config.at("nuisance");
  LearnerSpec g = cli::learner_from_json(nu.at("g"));
  LearnerSpec pi = cli::learner_from_json(nu.at("pi"));
  g.seed = derive_seed(child(ctx, "nuisance"), "g", g.seed);
  pi.seed = derive_seed(child(ctx, "nuisance"), "pi", pi.seed);
  const FoldAssignment folds = assign_view_folds(view, nu.at("folds").get<std::size_t>(), child(ctx, "folds"));
  NuisanceBundle b;
  b.nuis = cross_fit(view, folds, g, pi, nu.at("clip").get<double>(), ctx.jobs);
  if (need_g1) {
    LearnerSpec g1 = g;
    g1.seed = derive_seed(child(ctx, "nuisance"), "g1");
    b.g1 = cross_fit_treated(view, folds, g1, ctx.jobs);
  }
  log(ctx, "cross-fitted nuisances on " + std::to_string(view.size()) + " rows");
  return b;
}

std::vector<LearnerSetup> candidates(const Context& ctx) {
  std::vector<LearnerSetup> out;
  for (const auto& c : ctx.config.at("selection").at("candidates")) out.push_back(cli::learner_setup_from_json(c));
  if (out.empty()) out.push_back(cli::learner_setup_from_json(ctx.config.at("final")));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].name.empty()) out[i].name = "candidate_" + std::to_string(i);
    out[i].final_spec.seed = derive_seed(child(ctx, "final"), "candidate", i);
  }
  return out;
}

NuisanceEstimates subset(const NuisanceEstimates& n, const std::vector<std::size_t>& rows) {
  NuisanceEstimates s = n;
  s.g_hat = select_rows(n.g_hat, rows);
  s.pi_hat = select_rows(n.pi_hat, rows);
  s.fold = {};
  return s;
}

Json att_json(const PseudoOutcome& p) {
  const double a = att(p);
  std::vector<double> infl(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    infl[i] = p.y_hat(ii) - a * p.d(ii);
  }
  const double se = sample_sd(infl) / (std::sqrt(static_cast<double>(p.size())) * mean(as_span(p.d)));
  return Json{{"estimate", number_or_null(a)}, {"se", number_or_null(se)}};
}

std::size_t count_nonzero(const Vector& v) {
  return static_cast<std::size_t>((v.array() != 0.0).count());
}

// Fits the catt-mode model: held-out selection over candidates, then a refit on
// every row. Returns the model and a report fragment.
std::pair<CattModel, Json> fit_catt(const Context& ctx, const TwoPeriodView& view) {
  const auto cands = candidates(ctx);
  bool need_g1 = false;
  for (const auto& c : cands) need_g1 = need_g1 || needs_treated_regression(c.estimator);
  const NuisanceBundle nb = catt_nuisance(ctx, view, need_g1);
  const PseudoOutcome pseudo = pseudo_outcome(view, nb.nuis);

  Json report;
  report["rows"] = view.size();
  report["treated"] = count_nonzero(view.d);
  report["x"] = view.x_names();
  report["att"] = att_json(pseudo);

  const double hf = ctx.config.at("selection").at("heldout_fraction").get<double>();
  const auto k = static_cast<std::size_t>(std::max(2.0, std::round(1.0 / hf)));
  const FoldAssignment split = assign_view_folds(view, k, child(ctx, "heldout"));
  const auto held = split.rows_in(0), train = split.rows_not_in(0);
  const PseudoOutcome held_pseudo = pseudo.subset(held);
  const TwoPeriodView train_view = view.subset(train);
  const NuisanceEstimates train_nuis = subset(nb.nuis, train);
  const Vector train_g1 = need_g1 ? Vector(select_rows(nb.g1, train)) : Vector();

  std::vector<CattModel> fitted;
  Json cand_json = Json::array();
  for (const auto& c : cands) {
    fitted.push_back(fit_estimator(c, train_view, train_nuis, train_g1));
    const double loss = dr_loss(fitted.back().predict(held_pseudo.x), held_pseudo);
    cand_json.push_back(Json{{"name", c.name}, {"estimator", c.estimator},
                             {"final", to_string(c.final_spec.kind)}, {"heldout_dr_loss", number_or_null(loss)}});
    log(ctx, "candidate " + c.name + " held-out dr_loss " + format_double(loss));
  }
  const std::size_t best = select_by_heldout_loss(fitted, held_pseudo);
  report["heldout_rows"] = held.size();
  report["candidates"] = cand_json;
  report["selected"] = cands[best].name;

  CattModel model = fit_estimator(cands[best], view, nb.nuis, nb.g1);
  model.metadata.emplace_back("mode", "catt");
  model.metadata.emplace_back("candidate", cands[best].name);
  model.metadata.emplace_back("seed", std::to_string(ctx.seed));
  report["training_loss"] = number_or_null(model.training_loss);
  report["heldout_dr_loss"] = cand_json[best]["heldout_dr_loss"];
  write_text(ctx.out / "nuisances.csv", to_csv_string(nb.nuis.to_csv()));
  return {std::move(model), std::move(report)};
}

std::pair<CattModel, Json> fit_iv(const Context& ctx, const Loaded& d) {
  if (!d.panel) throw Error("cli", "config", "mode iv needs panel data with instrument and treatment columns");
  const PanelDataset& p = *d.panel;
  const auto x = resolve_x(p.covariate_names(), ctx.config.at("x"), default_x(d));
  const std::string tr = ctx.config.at("transform").get<std::string>();
  if (tr == "event_study") throw Error("cli", "config", "mode iv supports parallel_trends or lagged_outcome");
  const IvView view = iv_view(p, period_index(p, ctx.config.at("pre"), 0),
                              period_index(p, ctx.config.at("post"), p.num_periods() - 1), x,
                              tr == "lagged_outcome" ? Transform::kLaggedOutcome : Transform::kParallelTrends);
  const Json& nu = ctx.config.at("nuisance");
  LearnerSpec g = cli::learner_from_json(nu.at("g"));
  LearnerSpec pi = cli::learner_from_json(nu.at("pi"));
  g.seed = derive_seed(child(ctx, "nuisance"), "g", g.seed);
  pi.seed = derive_seed(child(ctx, "nuisance"), "pi", pi.seed);
  const IvNuisance nuis = cross_fit_iv(view, nu.at("folds").get<std::size_t>(), g, pi, nu.at("clip").get<double>(),
                                       child(ctx, "folds"), ctx.jobs);
  const IvPseudo ps = iv_pseudo(view, nuis);
  const double floor = ctx.config.at("iv").at("instrument_floor").get<double>();
  const LattResult l = latt(ps.a, ps.b, floor);
  const LearnerSetup fs = cli::learner_setup_from_json(ctx.config.at("final"));
  const ClateFit fit = fit_dr_clate(ps, fs.final_spec, fs.ridge_penalty, floor);

  CsvTable nt;
  nt.header = {"g_y", "g_d", "pi_hat", "fold"};
  for (Eigen::Index i = 0; i < nuis.pi.size(); ++i)
    nt.rows.push_back({format_double(nuis.g_y(i)), format_double(nuis.g_d(i)), format_double(nuis.pi(i)),
                       std::to_string(nuis.fold.fold_of[static_cast<std::size_t>(i)])});
  write_text(ctx.out / "nuisances.csv", to_csv_string(nt));

  Json report;
  report["rows"] = view.size();
  report["x"] = ps.x_names;
  report["latt"] = Json{{"estimate", l.estimate}, {"se", l.se}, {"mean_a", l.mean_a}, {"mean_b", l.mean_b},
                        {"weak_instrument", l.weak_instrument}};
  report["smallest_eigenvalue"] = fit.smallest_eigenvalue;
  report["training_loss"] = number_or_null(fit.model.training_loss);
  CattModel model = fit.model;
  model.metadata.emplace_back("mode", "iv");
  model.metadata.emplace_back("seed", std::to_string(ctx.seed));
  return {std::move(model), std::move(report)};
}

std::pair<CattModel, Json> fit_covshift(const Context& ctx, const Loaded& d) {
  ShiftView view;
  if (d.shift) {
    view = *d.shift;
    const auto x = ctx.config.at("x");
    if (!x.is_null()) view.x_cols = resolve_x(view.w_names, x, {});
  } else {
    view = shift_view_from_catt(catt_view(ctx, d));
  }
  const Json& cs = ctx.config.at("covshift");
  const MomentKind kind = moment_kind_from_string(cs.at("moment").get<std::string>());
  const Json& nu = ctx.config.at("nuisance");
  LearnerSpec g = cli::learner_from_json(nu.at("g"));
  LearnerSpec pi = cli::learner_from_json(nu.at("pi"));
  g.seed = derive_seed(child(ctx, "nuisance"), "g", g.seed);
  pi.seed = derive_seed(child(ctx, "nuisance"), "pi", pi.seed);
  const double clip = nu.at("clip").get<double>();
  const ShiftNuisance nuis =
      cross_fit_shift(view, kind, nu.at("folds").get<std::size_t>(), g, pi, clip, child(ctx, "folds"), ctx.jobs);

  const std::string riesz = cs.at("riesz").get<std::string>();
  RieszSpec rs;
  if (riesz == "constant") {
    rs = RieszSpec::constant(cs.at("riesz_value").get<double>());
  } else if (riesz == "cate_shift") {
    LearnerSpec q = pi;
    q.seed = derive_seed(child(ctx, "nuisance"), "q");
    rs = RieszSpec::cate_shift(cross_fit_target_treatment(view, nuis.fold, q, clip, ctx.jobs), clip);
  } else if (riesz == "user_table") {
    const Json& src = ctx.config.at("data");
    if (!src.contains("shift_csv") || src["shift_csv"]["alpha"].is_null())
      throw Error("cli", "config", "riesz user_table needs data.shift_csv.alpha");
    const Json& sc = src["shift_csv"];
    const CsvTable t = read_csv(sc.at("path").get<std::string>());
    const std::size_t c = t.require(sc["alpha"].get<std::string>(), "cli", "riesz");
    Vector a(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto v = parse_double(t.rows[i][c]);
      if (!v) throw Error("cli", "riesz", "alpha row " + std::to_string(i + 1) + ": not a number");
      a(static_cast<Eigen::Index>(i)) = *v;
    }
    rs = RieszSpec::user_table(a);
  } else {
    throw Error("cli", "config", "covshift.riesz must be constant, cate_shift or user_table");
  }
  const PseudoOutcome ps = covshift_pseudo_outcome(view, nuis, riesz_values(view, rs), kind);
  const LearnerSetup fs = cli::learner_setup_from_json(ctx.config.at("final"));
  CattModel model = fit_covshift_functional(ps, fs.final_spec, fs.ridge_penalty);
  model.metadata.emplace_back("mode", "covshift");
  model.metadata.emplace_back("moment", to_string(kind));
  model.metadata.emplace_back("riesz", riesz);
  model.metadata.emplace_back("seed", std::to_string(ctx.seed));

  Json report;
  report["rows"] = view.size();
  report["target_rows"] = count_nonzero(view.e);
  report["x"] = ps.x_names;
  report["functional_mean"] = att_json(ps);
  report["training_loss"] = number_or_null(model.training_loss);
  return {std::move(model), std::move(report)};
}

Matrix training_x(const Context& ctx, const Loaded& d, const CattModel& model) {
  const std::string mode = ctx.config.at("mode").get<std::string>();
  (void)model;
  if (mode == "catt") return catt_view(ctx, d).x();
  if (mode == "iv") {
    const PanelDataset& p = *d.panel;
    const auto x = resolve_x(p.covariate_names(), ctx.config.at("x"), default_x(d));
    const Matrix w = p.covariate_matrix();
    return select_cols(w, x);
  }
  ShiftView v = d.shift ? *d.shift : shift_view_from_catt(catt_view(ctx, d));
  if (d.shift && !ctx.config.at("x").is_null()) v.x_cols = resolve_x(v.w_names, ctx.config.at("x"), {});
  return v.x();
}

std::pair<CattModel, Json> fit_any(const Context& ctx, const Loaded& d) {
  const std::string mode = ctx.config.at("mode").get<std::string>();
  if (mode == "iv") return fit_iv(ctx, d);
  if (mode == "covshift") return fit_covshift(ctx, d);
  return fit_catt(ctx, catt_view(ctx, d));
}

void save_model(const fs::path& path, const CattModel& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cli", "write", "cannot open " + path.string());
  m.save(f);
}

// Commands --------------------------------------------------------------------

void cmd_simulate(const Context& ctx) {
  const Loaded d = load_data(ctx);
  Json report;
  report["schema_version"] = cli::kSchemaVersion;
  report["source"] = d.kind;
  if (d.sim || d.iv) {
    PanelSchema schema;
    schema.covariates = d.panel->covariate_names();
    if (d.iv) {
      schema.cohort.reset();
      schema.instrument = "z";
      schema.treatment = "d";
    }
    CsvTable panel = parse_csv(panel_to_csv(*d.panel, schema));
    // Unit-level oracle columns repeated on every period row.
    CsvTable oracle;
    if (d.sim) {
      oracle = d.sim->oracle_csv();
    } else {
      oracle.header = {"unit", "clate", "pi0", "g_y0", "g_d0"};
      for (std::size_t i = 0; i < d.panel->num_units(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        oracle.rows.push_back({d.panel->unit(i).id, format_double(d.iv->clate(ii)), format_double(d.iv->pi0(ii)),
                               format_double(d.iv->g_y0(ii)), format_double(d.iv->g_d0(ii))});
      }
    }
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < oracle.rows.size(); ++i) row_of[oracle.rows[i][0]] = i;
    const std::vector<std::string> extra(oracle.header.begin() + 1, oracle.header.end());
    for (const auto& h : extra) panel.header.push_back("oracle_" + h);
    for (auto& row : panel.rows) {
      const auto& o = oracle.rows[row_of.at(row[0])];
      row.insert(row.end(), o.begin() + 1, o.end());
    }
    write_text(ctx.out / "panel.csv", to_csv_string(panel));
    write_text(ctx.out / "oracle.csv", to_csv_string(oracle));
    report["units"] = d.panel->num_units();
    report["periods"] = d.panel->period_labels();
    Json sj{{"unit", schema.unit}, {"period", schema.period}, {"outcome", schema.outcome},
            {"cohort", schema.cohort ? Json(*schema.cohort) : Json(nullptr)}, {"covariates", schema.covariates},
            {"instrument", schema.instrument ? Json(*schema.instrument) : Json(nullptr)},
            {"treatment", schema.treatment ? Json(*schema.treatment) : Json(nullptr)}};
    report["csv_schema"] = sj;
    if (d.sim) {
      std::vector<std::string> x;
      for (auto c : d.sim->x_cols) x.push_back(d.panel->covariate_names()[c]);
      report["x"] = x;
    }
  } else if (d.shift_sim) {
    const ShiftView& v = d.shift_sim->view;
    CsvTable t;
    t.header = v.w_names;
    for (const char* h : {"E", "Y", "oracle_g0", "oracle_pi0"}) t.header.push_back(h);
    for (Eigen::Index i = 0; i < v.e.size(); ++i) {
      std::vector<std::string> row;
      for (Eigen::Index j = 0; j < v.w.cols(); ++j) row.push_back(format_double(v.w(i, j)));
      row.push_back(format_double(v.e(i)));
      row.push_back(v.e(i) == 0.0 ? format_double(v.y(i)) : "");
      row.push_back(format_double(d.shift_sim->g0(i)));
      row.push_back(format_double(d.shift_sim->pi0(i)));
      t.rows.push_back(std::move(row));
    }
    write_text(ctx.out / "rows.csv", to_csv_string(t));
    report["rows"] = v.e.size();
  } else {
    throw Error("cli", "simulate", "data source " + d.kind + " is not a generator");
  }
  write_json(ctx.out / "simulate_report.json", report);
}

void cmd_fit(const Context& ctx) {
  const Loaded d = load_data(ctx);
  auto [model, report] = fit_any(ctx, d);
  const Matrix x = training_x(ctx, d, model);
  save_model(ctx.out / "model.txt", model);
  write_text(ctx.out / "x_train.csv", to_csv_string(matrix_csv(x, model.x_names)));
  write_text(ctx.out / "training_predictions.csv", to_csv_string(prediction_csv(model.predict(x))));
  Json full;
  full["schema_version"] = cli::kSchemaVersion;
  full["mode"] = ctx.config.at("mode");
  full["estimator"] = model.estimator;
  full["final"] = to_string(model.final_kind);
  for (auto& [k, v] : report.items()) full[k] = v;
  write_json(ctx.out / "fit_report.json", full);
}

void cmd_predict(const Context& ctx, const fs::path& model_path, const fs::path& input) {
  const std::string text = read_text(model_path);
  std::istringstream in(text);
  const CattModel model = CattModel::load(in);
  const CsvTable t = read_csv(input);
  Matrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(model.arity()));
  for (std::size_t j = 0; j < model.arity(); ++j) {
    const std::size_t c = t.require(model.x_names[j], "cli", "predict");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto v = parse_double(t.rows[i][c]);
      if (!v)
        throw Error("cli", "predict", "column " + model.x_names[j] + ", row " + std::to_string(i + 1) +
                                          ": not a number");
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  write_text(ctx.out / "predictions.csv", to_csv_string(prediction_csv(model.predict(x))));
  log(ctx, "predicted " + std::to_string(t.rows.size()) + " rows");
}

void cmd_evaluate(const Context& ctx) {
  if (ctx.config.at("mode") != "catt") throw Error("cli", "evaluate", "evaluate supports mode catt");
  const Loaded d = load_data(ctx);
  if (!d.sim) throw Error("cli", "evaluate", "evaluate needs an oracle (data.dgp or data.semisynthetic)");
  auto [model, report] = fit_catt(ctx, catt_view(ctx, d));
  const std::size_t n_test = ctx.config.at("evaluate").at("n_test").get<std::size_t>();
  const std::uint64_t test_seed = child(ctx, "test");
  const SimulatedPanel test = [&] {
    if (d.kind == "dgp") {
      DgpConfig c = d.sim->config;
      c.coefficient_seed = c.coef_seed();
      c.seed = test_seed;
      c.n = n_test;
      return simulate(c);
    }
    const Json& j = ctx.config.at("data").at("semisynthetic");
    SemiSynthConfig r = cli::semisynth_from_json(j);
    r.n = n_test;
    return semisynthetic(fs::path(j.at("base").get<std::string>()), r, test_seed);
  }();
  const TwoPeriodView tv = test.view();
  const Matrix tx = select_cols(tv.w, model.x_cols);
  const Vector pred = model.predict(tx);
  const double mse = mse_treated(pred, tv.d, test.theta);
  std::vector<double> th;
  for (Eigen::Index i = 0; i < tv.d.size(); ++i)
    if (tv.d(i) != 0.0) th.push_back(test.theta(i));
  Json out;
  out["schema_version"] = cli::kSchemaVersion;
  out["estimator"] = model.estimator;
  out["n_test"] = n_test;
  out["test_treated"] = th.size();
  out["mse_treated"] = mse;
  out["test_att_oracle"] = mean(th);
  out["train"] = report;
  write_json(ctx.out / "evaluate.json", out);
  CsvTable t;
  t.header = {"d", "theta", "prediction"};
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    t.rows.push_back({format_double(tv.d(i)), format_double(test.theta(i)), format_double(pred(i))});
  write_text(ctx.out / "evaluate_predictions.csv", to_csv_string(t));
  save_model(ctx.out / "model.txt", model);
}

void cmd_calibrate(const Context& ctx) {
  if (ctx.config.at("mode") != "catt") throw Error("cli", "calibrate", "calibrate supports mode catt");
  const Loaded d = load_data(ctx);
  const TwoPeriodView view = catt_view(ctx, d);
  const LearnerSetup fs = cli::learner_setup_from_json(ctx.config.at("final"));
  if (fs.estimator != "dr") throw Error("cli", "calibrate", "calibration uses the dr estimator");
  const NuisanceBundle nb = catt_nuisance(ctx, view, false);
  const PseudoOutcome pseudo = pseudo_outcome(view, nb.nuis);

  const Json& cc = ctx.config.at("calibration");
  const auto split = cc.at("split").get<std::vector<double>>();
  if (split.size() != 3 || split[0] <= 0 || split[1] <= 0 || split[2] <= 0)
    throw Error("cli", "calibrate", "calibration.split needs three positive shares");
  // Units are shuffled once and cut by the shares, so a unit's rows stay together.
  std::vector<std::string> units;
  std::unordered_map<std::string, std::size_t> unit_index;
  for (const auto& u : view.source_unit)
    if (unit_index.emplace(u, units.size()).second) units.push_back(u);
  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(child(ctx, "split"));
  shuffle_indices(order, rng);
  const double total = split[0] + split[1] + split[2];
  const auto n_train = static_cast<std::size_t>(std::round(split[0] / total * static_cast<double>(units.size())));
  const auto n_val = static_cast<std::size_t>(std::round(split[1] / total * static_cast<double>(units.size())));
  std::vector<int> part(units.size());
  for (std::size_t r = 0; r < order.size(); ++r) part[order[r]] = r < n_train ? 0 : (r < n_train + n_val ? 1 : 2);
  std::vector<std::size_t> rows[3];
  for (std::size_t i = 0; i < view.size(); ++i) rows[part[unit_index[view.source_unit[i]]]].push_back(i);
  for (int s = 0; s < 3; ++s)
    if (rows[s].empty()) throw Error("cli", "calibrate", "a calibration split is empty");

  LearnerSetup f = fs;
  f.final_spec.seed = child(ctx, "final");
  const CattModel model = fit_dr_catt(pseudo.subset(rows[0]), f.final_spec, f.ridge_penalty);
  CalibrationOptions opt;
  opt.bootstrap = cc.at("bootstrap").get<std::size_t>();
  opt.seed = child(ctx, "bootstrap");
  const PseudoOutcome test = pseudo.subset(rows[2]);
  const CalibrationReport rep =
      calibrate(model, pseudo.subset(rows[1]), test, cc.at("bins").get<std::size_t>(), opt);

  CsvTable bins = rep.bins_csv();
  if (d.sim) {
    bins.header.push_back("oracle_theta");
    std::vector<double> num(rep.bins.size(), 0.0), den(rep.bins.size(), 0.0);
    for (std::size_t k = 0; k < rows[2].size(); ++k) {
      const auto i = static_cast<Eigen::Index>(rows[2][k]);
      if (view.d(i) == 0.0) continue;
      const auto unit = static_cast<Eigen::Index>(unit_index.at(view.source_unit[rows[2][k]]));
      num[rep.bin_of[k]] += d.sim->theta(unit);
      den[rep.bin_of[k]] += 1.0;
    }
    for (std::size_t b = 0; b < rep.bins.size(); ++b)
      bins.rows[b].push_back(den[b] > 0 ? format_double(num[b] / den[b]) : "nan");
  }
  write_text(ctx.out / "calibration_bins.csv", to_csv_string(bins));
  write_text(ctx.out / "calibration_plot.csv", to_csv_string(rep.plot_csv()));
  Json j = Json::parse(rep.json());
  j["schema_version"] = cli::kSchemaVersion;
  j["split_rows"] = {rows[0].size(), rows[1].size(), rows[2].size()};
  write_json(ctx.out / "calibration.json", j);
  save_model(ctx.out / "model.txt", model);
}

void cmd_benchmark(const Context& ctx) {
  const BenchmarkConfig cfg = cli::benchmark_from_json(ctx.config, ctx.seed, ctx.jobs);
  const BenchmarkResult r = run_benchmark(cfg);
  write_text(ctx.out / "results.csv", to_csv_string(r.results_csv()));
  write_text(ctx.out / "summary.csv", to_csv_string(r.summary_csv()));
  write_text(ctx.out / "summary.json", r.summary_json());
  log(ctx, "benchmark finished in " + format_double(r.wall_clock_seconds) + " s");
}

Json error_record(const std::string& module, const std::string& op, const std::string& msg) {
  return Json{{"module", module}, {"operation", op}, {"message", msg}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"didcatt: doubly robust conditional effects on the treated for panel data"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out_dir;
  bool verbose = false;
  app.add_option("--config", config_path, "Run-config JSON file");
  app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--jobs", jobs, "Worker threads (DIDCATT_JOBS overrides)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--verbose", verbose, "Progress on stderr");

  std::string model_path, input_path;
  auto* sim = app.add_subcommand("simulate", "Draw a synthetic panel with oracle columns");
  auto* fit = app.add_subcommand("fit", "Cross-fit nuisances and fit the final stage");
  auto* pred = app.add_subcommand("predict", "Predict from a saved model");
  pred->add_option("--model", model_path, "Model file")->required();
  pred->add_option("--input", input_path, "CSV with the model's feature columns")->required();
  auto* ev = app.add_subcommand("evaluate", "Treated-population MSE against the generator's oracle");
  auto* cal = app.add_subcommand("calibrate", "Quantile-bin calibration report");
  auto* bm = app.add_subcommand("benchmark", "Run the benchmark grid");
  for (auto* s : {sim, fit, pred, ev, cal, bm}) s->fallthrough();

  fs::path err_dir = ".";
  std::string op = "main";
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw Error("cli", "parse", e.what());
    }
    auto* cmd = app.get_subcommands().front();
    op = cmd->get_name();

    Context ctx;
    ctx.verbose = verbose;
    Json user;
    if (!config_path.empty()) {
      try {
        user = Json::parse(read_text(config_path));
      } catch (const Json::exception& e) {
        throw Error("cli", "config", std::string("invalid JSON: ") + e.what());
      }
    } else if (op != "predict") {
      throw Error("cli", "config", "--config is required for " + op);
    } else {
      user = Json{{"schema_version", cli::kSchemaVersion}};
    }
    if (!out_dir.empty()) ctx.out = out_dir;
    else if (user.is_object() && user.contains("out") && user["out"].is_string()) ctx.out = user["out"].get<std::string>();
    else ctx.out = "didcatt_out";
    err_dir = ctx.out;
    fs::create_directories(ctx.out);

    try {
      ctx.config = cli::resolve_config(user);
    } catch (const Json::exception& e) {
      throw Error("cli", "config", e.what());
    }
    if (seed) ctx.config["seed"] = *seed;
    ctx.seed = ctx.config.at("seed").get<std::uint64_t>();
    int requested = 0;
    if (const char* env = std::getenv("DIDCATT_JOBS"); env && *env) {
      requested = resolve_jobs(0);
    } else if (jobs) {
      requested = *jobs;
    }
    ctx.jobs = resolve_jobs(requested);
    log(ctx, op + ": seed " + std::to_string(ctx.seed) + ", jobs " + std::to_string(ctx.jobs) + ", out " +
                 ctx.out.string());
    if (op != "predict") write_json(ctx.out / "resolved_config.json", ctx.config);

    try {
      if (op == "simulate") cmd_simulate(ctx);
      else if (op == "fit") cmd_fit(ctx);
      else if (op == "predict") cmd_predict(ctx, model_path, input_path);
      else if (op == "evaluate") cmd_evaluate(ctx);
      else if (op == "calibrate") cmd_calibrate(ctx);
      else cmd_benchmark(ctx);
    } catch (const Json::exception& e) {
      throw Error("cli", op, std::string("config value: ") + e.what());
    }
    std::error_code ec;
    fs::remove(ctx.out / "errors.json", ec);
    return 0;
  } catch (const Error& e) {
    const Json rec = error_record(e.module(), e.operation(), e.what());
    std::cerr << rec.dump() << "\n";
    std::error_code ec;
    fs::create_directories(err_dir, ec);
    std::ofstream f(err_dir / "errors.json");
    if (f) f << rec.dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    const Json rec = error_record("cli", op, e.what());
    std::cerr << rec.dump() << "\n";
    std::error_code ec;
    fs::create_directories(err_dir, ec);
    std::ofstream f(err_dir / "errors.json");
    if (f) f << rec.dump(2) << "\n";
    return 1;
  }
}
