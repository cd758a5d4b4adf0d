#include "run_config.hpp"

#include "didcatt/error.hpp"

namespace didcatt::cli {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("cli", "config", msg); }

const char* const kDataKinds[] = {"csv", "dgp", "iv_dgp", "semisynthetic", "shift_dgp", "shift_csv"};

Json learner_defaults() {
  return learner_to_json(LearnerSpec{});
}

Json final_defaults() {
  LearnerSpec s;
  s.kind = LearnerKind::kLinear;
  Json j = learner_to_json(s);
  j["estimator"] = "dr";
  j["ridge_penalty"] = -1.0;
  return j;
}

Json dgp_defaults() {
  const DgpConfig c;
  return Json{{"variant", to_string(c.variant)},
              {"n", c.n},
              {"d_w", c.d_w},
              {"d_u", c.d_u},
              {"x_dim", c.x_dim},
              {"coefficient_seed", nullptr},
              {"clip_lo", c.clip_lo},
              {"clip_hi", c.clip_hi},
              {"imbalance", c.imbalance},
              {"noise_sd", c.noise_sd},
              {"zero_effect", c.zero_effect},
              {"shift_strength", c.shift_strength},
              {"shift_col", c.shift_col}};
}

Json iv_defaults() {
  const IvConfig c;
  return Json{{"n", c.n},
              {"d_w", c.d_w},
              {"x_dim", c.x_dim},
              {"complier_rate", c.complier_rate},
              {"always_rate", c.always_rate},
              {"effect", "constant"},
              {"effect_value", c.effect_value},
              {"noise_sd", c.noise_sd},
              {"clip_lo", c.clip_lo},
              {"clip_hi", c.clip_hi}};
}

Json shift_defaults() {
  const ShiftConfig c;
  return Json{{"n", c.n},         {"d_w", c.d_w},      {"x_dim", c.x_dim},
              {"target_share", c.target_share}, {"shift", c.shift}, {"noise_sd", c.noise_sd}};
}

Json recipe_to_json(const RecipeFunction& f) {
  Json terms = Json::array();
  for (const auto& t : f.terms) {
    Json factors = Json::array();
    for (const auto& [col, pw] : t.factors) factors.push_back(Json::array({col, pw}));
    terms.push_back(Json{{"coef", t.coef}, {"factors", factors}});
  }
  return Json{{"constant", f.constant}, {"terms", terms}};
}

RecipeFunction recipe_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path + " must be an object");
  RecipeFunction f;
  for (const auto& [k, v] : j.items())
    if (k != "constant" && k != "terms") fail("unknown key " + path + "." + k);
  f.constant = j.value("constant", 0.0);
  for (const auto& t : j.value("terms", Json::array())) {
    RecipeTerm term;
    term.coef = t.value("coef", 1.0);
    for (const auto& fac : t.at("factors")) {
      if (!fac.is_array() || fac.size() != 2) fail(path + ": each factor is [column, power]");
      term.factors.emplace_back(fac[0].get<std::string>(), fac[1].get<double>());
    }
    f.terms.push_back(std::move(term));
  }
  return f;
}

Json semisynth_defaults() {
  const SemiSynthConfig r = SemiSynthConfig::default_recipe();
  return Json{{"base", ""},
              {"n", r.n},
              {"noise_sd", r.noise_sd},
              {"pre_outcome", r.pre_outcome},
              {"covariates", r.covariates},
              {"x_columns", r.x_columns},
              {"score", recipe_to_json(r.score)},
              {"trend", recipe_to_json(r.trend)},
              {"effect", recipe_to_json(r.effect)}};
}

Json csv_defaults() {
  return Json{{"path", ""},       {"unit", "unit"},         {"period", "period"},   {"outcome", "outcome"},
              {"cohort", "cohort"}, {"covariates", Json::array()}, {"instrument", nullptr}, {"treatment", nullptr}};
}

Json shift_csv_defaults() {
  return Json{{"path", ""}, {"covariates", Json::array()}, {"e", "E"}, {"y", "Y"},
              {"d", nullptr}, {"s", nullptr}, {"alpha", nullptr}, {"pi", nullptr}};
}

bool compatible(const Json& def, const Json& v) {
  if (def.is_null()) return true;
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string() || v.is_null();
  if (def.is_array()) return v.is_array();
  return v.is_object();
}

const char* type_name(const Json& def) {
  if (def.is_number()) return "a number";
  if (def.is_boolean()) return "a boolean";
  if (def.is_string()) return "a string";
  if (def.is_array()) return "an array";
  return "an object";
}

// Recursive merge: every user key must exist in the defaults; recipe objects
// and lists are taken as given.
Json merge(const Json& defaults, const Json& user, const std::string& path) {
  if (!user.is_object()) fail(path + " must be an object");
  Json out = defaults;
  for (const auto& [k, v] : user.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!defaults.contains(k)) fail("unknown key " + p);
    const Json& d = defaults[k];
    if (!compatible(d, v)) fail(p + " must be " + type_name(d));
    if (d.is_object() && !d.empty() && !d.contains("terms"))
      out[k] = merge(d, v, p);
    else
      out[k] = v;
  }
  return out;
}

Json merge_list(const Json& defaults, const Json& list, const std::string& path) {
  Json out = Json::array();
  for (std::size_t i = 0; i < list.size(); ++i)
    out.push_back(merge(defaults, list[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Json nuisance_defaults() {
  LearnerSpec g;
  g.lambda = 1.0;
  LearnerSpec pi;
  pi.kind = LearnerKind::kLogistic;
  return Json{{"g", learner_to_json(g)}, {"pi", learner_to_json(pi)}, {"folds", 5}, {"clip", 0.01}};
}

Json top_defaults() {
  return Json{{"schema_version", kSchemaVersion},
              {"seed", 0},
              {"out", nullptr},
              {"mode", "catt"},
              {"data", Json::object()},
              {"transform", "parallel_trends"},
              {"pre", nullptr},
              {"post", nullptr},
              {"x", nullptr},
              {"event_study_cohort", false},
              {"nuisance", nuisance_defaults()},
              {"final", final_defaults()},
              {"selection", Json{{"candidates", Json::array()}, {"heldout_fraction", 0.2}}},
              {"covshift", Json{{"moment", "identity"}, {"riesz", "constant"}, {"riesz_value", 1.0}}},
              {"iv", Json{{"instrument_floor", kDefaultInstrumentFloor}}},
              {"calibration", Json{{"bins", 4}, {"split", {0.5, 0.25, 0.25}}, {"bootstrap", 0}}},
              {"evaluate", Json{{"n_test", 2000}}},
              {"benchmark", Json{{"replications", 1},
                                 {"n_test", 2000},
                                 {"dgps", Json::array()},
                                 {"nuisances", Json::array()},
                                 {"learners", Json::array()}}}};
}

template <class T>
T get_count(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (v.is_number_integer() || v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<long long>() < 0) fail(std::string(key) + " must be non-negative");
    return v.get<T>();
  }
  fail(std::string(key) + " must be an integer");
}

}  // namespace

Json learner_to_json(const LearnerSpec& s) {
  return Json{{"kind", to_string(s.kind)},
              {"lambda", s.lambda},
              {"lambda_grid", s.lambda_grid},
              {"cv_folds", s.cv_folds},
              {"max_depth", s.max_depth},
              {"rounds", s.rounds},
              {"learning_rate", s.learning_rate},
              {"early_stop_patience", s.early_stop_patience},
              {"reg_lambda", s.reg_lambda},
              {"min_child_weight", s.min_child_weight},
              {"feature_map", to_string(s.feature_map)},
              {"seed", s.seed}};
}

LearnerSpec learner_from_json(const Json& j) {
  LearnerSpec s;
  s.kind = learner_kind_from_string(j.at("kind").get<std::string>());
  s.lambda = j.at("lambda").get<double>();
  s.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  s.cv_folds = j.at("cv_folds").get<int>();
  s.max_depth = j.at("max_depth").get<int>();
  s.rounds = j.at("rounds").get<int>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.early_stop_patience = j.at("early_stop_patience").get<int>();
  s.reg_lambda = j.at("reg_lambda").get<double>();
  s.min_child_weight = j.at("min_child_weight").get<double>();
  s.feature_map = feature_map_from_string(j.at("feature_map").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

Json resolve_config(const Json& user) {
  if (!user.is_object()) fail("config must be a JSON object");
  if (!user.contains("schema_version")) fail("missing schema_version");
  if (user.at("schema_version") != kSchemaVersion)
    fail("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  Json out = merge(top_defaults(), user, "");

  const Json& data = user.value("data", Json::object());
  Json resolved_data = Json::object();
  for (const auto& [k, v] : data.items()) {
    Json def;
    if (k == "csv") def = csv_defaults();
    else if (k == "dgp") def = dgp_defaults();
    else if (k == "iv_dgp") def = iv_defaults();
    else if (k == "semisynthetic") def = semisynth_defaults();
    else if (k == "shift_dgp") def = shift_defaults();
    else if (k == "shift_csv") def = shift_csv_defaults();
    else fail("unknown data source data." + k);
    resolved_data[k] = merge(def, v, "data." + k);
  }
  if (resolved_data.size() > 1) fail("exactly one data source is allowed");
  out["data"] = resolved_data;

  if (user.contains("nuisance")) {
    const Json& nu = user["nuisance"];
    for (const char* k : {"g", "pi"})
      if (nu.contains(k)) out["nuisance"][k] = merge(learner_defaults(), nu[k], std::string("nuisance.") + k);
  }
  out["selection"]["candidates"] = merge_list(final_defaults(), out["selection"]["candidates"], "selection.candidates");

  Json& bm = out["benchmark"];
  Json dgp_item = dgp_defaults();
  dgp_item["name"] = "";
  bm["dgps"] = merge_list(dgp_item, bm["dgps"], "benchmark.dgps");
  Json nu_item = nuisance_defaults();
  nu_item["name"] = "";
  nu_item["oracle"] = false;
  Json nus = Json::array();
  for (std::size_t i = 0; i < bm["nuisances"].size(); ++i) {
    const std::string p = "benchmark.nuisances[" + std::to_string(i) + "]";
    const Json& u = bm["nuisances"][i];
    Json r = merge(nu_item, u, p);
    for (const char* k : {"g", "pi"})
      if (u.contains(k)) r[k] = merge(learner_defaults(), u[k], p + "." + k);
    nus.push_back(std::move(r));
  }
  bm["nuisances"] = nus;
  Json l_item = final_defaults();
  l_item["name"] = "";
  bm["learners"] = merge_list(l_item, bm["learners"], "benchmark.learners");

  // Parse everything once so a bad value fails before any work starts.
  learner_from_json(out["nuisance"]["g"]);
  learner_from_json(out["nuisance"]["pi"]);
  learner_setup_from_json(out["final"]);
  for (const auto& c : out["selection"]["candidates"]) learner_setup_from_json(c);
  const std::string mode = out["mode"].get<std::string>();
  if (mode != "catt" && mode != "iv" && mode != "covshift") fail("mode must be catt, iv or covshift");
  const std::string tr = out["transform"].get<std::string>();
  if (tr != "parallel_trends" && tr != "lagged_outcome" && tr != "event_study")
    fail("transform must be parallel_trends, lagged_outcome or event_study");
  moment_kind_from_string(out["covshift"]["moment"].get<std::string>());
  const double hf = out["selection"]["heldout_fraction"].get<double>();
  if (!(hf > 0.0 && hf < 1.0)) fail("selection.heldout_fraction must lie in (0, 1)");
  out.erase("out");
  return out;
}

std::string data_kind(const Json& resolved) {
  const Json& d = resolved.at("data");
  if (d.empty()) fail("config has no data source");
  return d.begin().key();
}

DgpConfig dgp_from_json(const Json& j, std::uint64_t seed) {
  DgpConfig c;
  c.variant = dgp_variant_from_string(j.at("variant").get<std::string>());
  c.n = get_count<std::size_t>(j, "n");
  c.d_w = get_count<std::size_t>(j, "d_w");
  c.d_u = get_count<std::size_t>(j, "d_u");
  c.x_dim = get_count<std::size_t>(j, "x_dim");
  if (!j.at("coefficient_seed").is_null()) c.coefficient_seed = j.at("coefficient_seed").get<std::uint64_t>();
  c.clip_lo = j.at("clip_lo").get<double>();
  c.clip_hi = j.at("clip_hi").get<double>();
  c.imbalance = j.at("imbalance").get<double>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.zero_effect = j.at("zero_effect").get<bool>();
  c.shift_strength = j.at("shift_strength").get<double>();
  c.shift_col = get_count<std::size_t>(j, "shift_col");
  c.seed = seed;
  c.validate();
  return c;
}

IvConfig iv_from_json(const Json& j, std::uint64_t seed) {
  IvConfig c;
  c.n = get_count<std::size_t>(j, "n");
  c.d_w = get_count<std::size_t>(j, "d_w");
  c.x_dim = get_count<std::size_t>(j, "x_dim");
  c.complier_rate = j.at("complier_rate").get<double>();
  c.always_rate = j.at("always_rate").get<double>();
  const std::string eff = j.at("effect").get<std::string>();
  if (eff == "constant") c.effect = IvConfig::Effect::kConstant;
  else if (eff == "linear") c.effect = IvConfig::Effect::kLinear;
  else fail("data.iv_dgp.effect must be constant or linear");
  c.effect_value = j.at("effect_value").get<double>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.clip_lo = j.at("clip_lo").get<double>();
  c.clip_hi = j.at("clip_hi").get<double>();
  c.seed = seed;
  c.validate();
  return c;
}

ShiftConfig shift_from_json(const Json& j, std::uint64_t seed) {
  ShiftConfig c;
  c.n = get_count<std::size_t>(j, "n");
  c.d_w = get_count<std::size_t>(j, "d_w");
  c.x_dim = get_count<std::size_t>(j, "x_dim");
  c.target_share = j.at("target_share").get<double>();
  c.shift = j.at("shift").get<double>();
  c.noise_sd = j.at("noise_sd").get<double>();
  c.seed = seed;
  return c;
}

SemiSynthConfig semisynth_from_json(const Json& j) {
  SemiSynthConfig r;
  r.n = get_count<std::size_t>(j, "n");
  r.noise_sd = j.at("noise_sd").get<double>();
  r.pre_outcome = j.at("pre_outcome").get<std::string>();
  r.covariates = j.at("covariates").get<std::vector<std::string>>();
  r.x_columns = j.at("x_columns").get<std::vector<std::string>>();
  r.score = recipe_from_json(j.at("score"), "data.semisynthetic.score");
  r.trend = recipe_from_json(j.at("trend"), "data.semisynthetic.trend");
  r.effect = recipe_from_json(j.at("effect"), "data.semisynthetic.effect");
  return r;
}

PanelSchema schema_from_json(const Json& j) {
  PanelSchema s;
  s.unit = j.at("unit").get<std::string>();
  s.period = j.at("period").get<std::string>();
  s.outcome = j.at("outcome").get<std::string>();
  if (j.at("cohort").is_null()) s.cohort.reset();
  else s.cohort = j.at("cohort").get<std::string>();
  s.covariates = j.at("covariates").get<std::vector<std::string>>();
  if (!j.at("instrument").is_null()) s.instrument = j.at("instrument").get<std::string>();
  if (!j.at("treatment").is_null()) s.treatment = j.at("treatment").get<std::string>();
  return s;
}

LearnerSetup learner_setup_from_json(const Json& j) {
  LearnerSetup s;
  s.name = j.value("name", std::string());
  s.estimator = j.at("estimator").get<std::string>();
  s.ridge_penalty = j.at("ridge_penalty").get<double>();
  Json spec = j;
  for (const char* k : {"name", "estimator", "ridge_penalty"}) spec.erase(k);
  s.final_spec = learner_from_json(spec);
  return s;
}

NuisanceSetup nuisance_setup_from_json(const Json& j) {
  NuisanceSetup s;
  s.name = j.value("name", std::string());
  s.g = learner_from_json(j.at("g"));
  s.pi = learner_from_json(j.at("pi"));
  s.folds = get_count<std::size_t>(j, "folds");
  s.clip = j.at("clip").get<double>();
  s.oracle = j.value("oracle", false);
  return s;
}

BenchmarkConfig benchmark_from_json(const Json& resolved, std::uint64_t seed, int jobs) {
  const Json& bm = resolved.at("benchmark");
  BenchmarkConfig c;
  c.replications = get_count<std::size_t>(bm, "replications");
  c.n_test = get_count<std::size_t>(bm, "n_test");
  c.master_seed = seed;
  c.jobs = jobs;
  for (const auto& d : bm.at("dgps")) {
    Json cfg = d;
    cfg.erase("name");
    c.dgps.push_back({d.at("name").get<std::string>(), dgp_from_json(cfg, 0)});
  }
  for (const auto& n : bm.at("nuisances")) c.nuisances.push_back(nuisance_setup_from_json(n));
  for (const auto& l : bm.at("learners")) c.learners.push_back(learner_setup_from_json(l));
  c.validate();
  return c;
}

}  // namespace didcatt::cli
