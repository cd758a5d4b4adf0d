#include "didcatt/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "didcatt/error.hpp"
#include "didcatt/parallel.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "eval";

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

nlohmann::ordered_json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

}  // namespace

double mse_treated(const Vector& predicted, const Vector& d, const Vector& oracle_theta) {
  if (predicted.size() != d.size() || oracle_theta.size() != d.size())
    throw Error(kModule, "mse_treated", "prediction, D and oracle lengths differ");
  std::vector<double> sq;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) != 0.0) {
      const double e = predicted(i) - oracle_theta(i);
      sq.push_back(e * e);
    }
  if (sq.empty()) throw Error(kModule, "mse_treated", "no treated test rows");
  return mean(sq);
}

double mse_treated(const CattModel& model, const TwoPeriodView& test, const Vector& oracle_theta) {
  return mse_treated(model.predict(test.x()), test.d, oracle_theta);
}

// Benchmark ----------------------------------------------------------------------

void BenchmarkConfig::validate() const {
  constexpr const char* op = "run_benchmark";
  if (dgps.empty() || nuisances.empty() || learners.empty())
    throw Error(kModule, op, "grid needs at least one dgp, nuisance and learner");
  if (replications == 0) throw Error(kModule, op, "replications must be positive");
  if (n_test == 0) throw Error(kModule, op, "n_test must be positive");
  auto unique_names = [&](const auto& items, const char* what) {
    std::vector<std::string> names;
    for (const auto& it : items) {
      if (it.name.empty()) throw Error(kModule, op, std::string(what) + " entry without a name");
      names.push_back(it.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw Error(kModule, op, std::string("duplicate ") + what + " name");
  };
  unique_names(dgps, "dgp");
  unique_names(nuisances, "nuisance");
  unique_names(learners, "learner");
  for (const auto& d : dgps) d.config.validate();
  for (const auto& nu : nuisances) {
    if (!nu.oracle) {
      nu.g.validate();
      nu.pi.validate();
    }
    if (nu.folds < 2) throw Error(kModule, op, "nuisance " + nu.name + ": folds must be at least 2");
  }
  for (const auto& l : learners) {
    static const std::vector<std::string> known = {"dr", "or", "cate_or", "cate_dr", "cate_dr_all"};
    if (std::find(known.begin(), known.end(), l.estimator) == known.end())
      throw Error(kModule, op, "learner " + l.name + ": unknown estimator '" + l.estimator + "'");
    l.final_spec.validate();
  }
}

const BenchmarkCell& BenchmarkResult::cell(const std::string& dgp, const std::string& nuisance,
                                           const std::string& learner) const {
  for (const auto& c : cells)
    if (c.dgp == dgp && c.nuisance == nuisance && c.learner == learner) return c;
  throw Error(kModule, "BenchmarkResult", "no cell " + dgp + "/" + nuisance + "/" + learner);
}

CsvTable BenchmarkResult::results_csv() const {
  CsvTable t;
  t.header = {"dgp", "nuisance", "learner", "replication", "seed", "mse"};
  for (const auto& c : cells)
    for (std::size_t r = 0; r < c.mse.size(); ++r)
      t.rows.push_back({c.dgp, c.nuisance, c.learner, std::to_string(r), std::to_string(c.seeds[r]),
                        format_double(c.mse[r])});
  return t;
}

CsvTable BenchmarkResult::summary_csv() const {
  CsvTable t;
  t.header = {"dgp", "nuisance", "learner", "replications", "mean_mse", "sd_mse"};
  for (const auto& c : cells)
    t.rows.push_back({c.dgp, c.nuisance, c.learner, std::to_string(c.mse.size()), format_double(c.mean),
                      format_double(c.sd)});
  return t;
}

std::string BenchmarkResult::summary_json() const {
  nlohmann::ordered_json j;
  j["master_seed"] = master_seed;
  j["replications"] = replications;
  auto& arr = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json e;
    e["dgp"] = c.dgp;
    e["nuisance"] = c.nuisance;
    e["learner"] = c.learner;
    e["mean_mse"] = c.mean;
    e["sd_mse"] = c.sd;
    e["mse"] = c.mse;
    e["seeds"] = c.seeds;
    arr.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::uint64_t replication_seed(std::uint64_t master, const std::string& dgp, std::size_t replication) {
  return derive_seed(master, "dgp:" + dgp, replication);
}

bool needs_treated_regression(const std::string& estimator) {
  return estimator == "cate_or" || estimator == "cate_dr" || estimator == "cate_dr_all";
}

CattModel fit_estimator(const LearnerSetup& setup, const TwoPeriodView& view, const NuisanceEstimates& nuis,
                        const Vector& g1_hat) {
  const std::string& e = setup.estimator;
  if (e == "dr") return fit_dr_catt(pseudo_outcome(view, nuis), setup.final_spec, setup.ridge_penalty);
  if (e == "or") return fit_or_catt(view, nuis, setup.final_spec, setup.ridge_penalty);
  if (e == "cate_or") return fit_cate_or(view, g1_hat, nuis, setup.final_spec, setup.ridge_penalty);
  if (e == "cate_dr") return fit_cate_dr(view, g1_hat, nuis, setup.final_spec, setup.ridge_penalty);
  if (e == "cate_dr_all")
    return fit_cate_dr(view, g1_hat, nuis, setup.final_spec, setup.ridge_penalty, CateDrRows::kAll);
  throw Error(kModule, "fit_estimator", "unknown estimator '" + e + "'");
}

namespace {

struct UnitOutput {
  std::uint64_t seed = 0;
  std::vector<double> mse;  // per learner
};

UnitOutput run_unit(const BenchmarkConfig& cfg, const DgpSetup& dgp, const NuisanceSetup& nu, std::size_t rep) {
  UnitOutput out;
  out.seed = replication_seed(cfg.master_seed, dgp.name, rep);

  DgpConfig train_cfg = dgp.config;
  train_cfg.seed = out.seed;
  DgpConfig test_cfg = train_cfg;
  test_cfg.coefficient_seed = train_cfg.coef_seed();
  test_cfg.seed = derive_seed(out.seed, "test");
  test_cfg.n = cfg.n_test;

  const SimulatedPanel train = simulate(train_cfg);
  const SimulatedPanel test = simulate(test_cfg);
  const TwoPeriodView view = train.view();
  const TwoPeriodView test_view = test.view();

  bool need_g1 = false;
  for (const auto& l : cfg.learners) need_g1 = need_g1 || needs_treated_regression(l.estimator);

  NuisanceEstimates nuis;
  Vector g1;
  if (nu.oracle) {
    if (!train.g0.allFinite())
      throw Error(kModule, "run_benchmark", "oracle nuisances are unavailable for dgp variant " +
                                                to_string(train_cfg.variant));
    nuis = NuisanceEstimates::from_arrays(train.g0, train.pi0, nu.clip);
    if (need_g1) g1 = train.g0 + train.theta;
  } else {
    const std::uint64_t nseed = derive_seed(out.seed, "nuisance:" + nu.name);
    LearnerSpec g = nu.g, pi = nu.pi;
    g.seed = derive_seed(nseed, "g");
    pi.seed = derive_seed(nseed, "pi");
    const FoldAssignment folds = assign_view_folds(view, nu.folds, derive_seed(nseed, "folds"));
    nuis = cross_fit(view, folds, g, pi, nu.clip, 1);
    if (need_g1) {
      LearnerSpec g1_spec = nu.g;
      g1_spec.seed = derive_seed(nseed, "g1");
      g1 = cross_fit_treated(view, folds, g1_spec, 1);
    }
  }

  const Matrix test_x = test_view.x();
  for (const auto& l : cfg.learners) {
    LearnerSetup setup = l;
    setup.final_spec.seed = derive_seed(out.seed, "final:" + l.name);
    try {
      const CattModel m = fit_estimator(setup, view, nuis, g1);
      out.mse.push_back(mse_treated(m.predict(test_x), test_view.d, test.theta));
    } catch (const Error& e) {
      throw Error(e.module(), e.operation(), "learner " + l.name + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t nd = config.dgps.size(), nn = config.nuisances.size(), nr = config.replications;
  std::vector<UnitOutput> units(nd * nn * nr);
  parallel_for(units.size(), resolve_jobs(config.jobs), [&](std::size_t u) {
    const std::size_t r = u % nr, ni = (u / nr) % nn, di = u / (nr * nn);
    try {
      units[u] = run_unit(config, config.dgps[di], config.nuisances[ni], r);
    } catch (const Error& e) {
      throw Error(e.module(), e.operation(),
                  "cell " + config.dgps[di].name + "/" + config.nuisances[ni].name + ", replication " +
                      std::to_string(r) + ": " + e.what());
    }
  });

  BenchmarkResult result;
  result.replications = nr;
  result.master_seed = config.master_seed;
  for (std::size_t di = 0; di < nd; ++di)
    for (std::size_t ni = 0; ni < nn; ++ni)
      for (std::size_t li = 0; li < config.learners.size(); ++li) {
        BenchmarkCell c;
        c.dgp = config.dgps[di].name;
        c.nuisance = config.nuisances[ni].name;
        c.learner = config.learners[li].name;
        for (std::size_t r = 0; r < nr; ++r) {
          const UnitOutput& u = units[(di * nn + ni) * nr + r];
          c.mse.push_back(u.mse[li]);
          c.seeds.push_back(u.seed);
        }
        c.mean = mean(c.mse);
        c.sd = sample_sd(c.mse);
        result.cells.push_back(std::move(c));
      }
  result.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// Calibration --------------------------------------------------------------------

double quantile7(std::vector<double> values, double q) {
  if (values.empty()) throw Error(kModule, "quantile7", "empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(kModule, "quantile7", "q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::size_t assign_bin(const std::vector<double>& thresholds, double value) {
  return static_cast<std::size_t>(std::lower_bound(thresholds.begin(), thresholds.end(), value) -
                                  thresholds.begin());
}

namespace {

struct BinStats {
  double att, se;
};

// Ratio estimate and delta-method SE over the rows of one bin.
BinStats bin_stats(const PseudoOutcome& test, const std::vector<std::size_t>& rows) {
  std::vector<double> y, d;
  for (std::size_t i : rows) {
    y.push_back(test.y_hat(static_cast<Eigen::Index>(i)));
    d.push_back(test.d(static_cast<Eigen::Index>(i)));
  }
  const double md = mean(d);
  if (md == 0.0) return {nan(), nan()};
  const double a = mean(y) / md;
  std::vector<double> infl(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) infl[k] = y[k] - a * d[k];
  const double se = sample_sd(infl) / (std::sqrt(static_cast<double>(rows.size())) * md);
  return {a, se};
}

}  // namespace

CalibrationReport calibrate_predictions(const Vector& val_pred, const Vector& test_pred, const PseudoOutcome& test,
                                        std::size_t n_bins, const CalibrationOptions& options) {
  constexpr const char* op = "calibrate";
  if (n_bins < 2) throw Error(kModule, op, "n_bins must be at least 2");
  if (val_pred.size() == 0) throw Error(kModule, op, "empty validation set");
  if (test_pred.size() != test.y_hat.size() || test.d.size() != test.y_hat.size())
    throw Error(kModule, op, "test predictions are not aligned with the test pseudo-outcomes");
  if (test.size() == 0) throw Error(kModule, op, "empty test set");

  CalibrationReport rep;
  rep.requested_bins = n_bins;
  rep.bootstrap = options.bootstrap > 0;
  const std::vector<double> v(val_pred.data(), val_pred.data() + val_pred.size());
  for (std::size_t b = 1; b < n_bins; ++b)
    rep.thresholds.push_back(quantile7(v, static_cast<double>(b) / static_cast<double>(n_bins)));
  const std::size_t raw = rep.thresholds.size();
  rep.thresholds.erase(std::unique(rep.thresholds.begin(), rep.thresholds.end()), rep.thresholds.end());
  rep.collapsed = raw - rep.thresholds.size();
  if (rep.collapsed > 0)
    rep.notes.push_back(std::to_string(rep.collapsed) + " duplicate threshold(s) collapsed; " +
                        std::to_string(rep.thresholds.size() + 1) + " bins remain");

  const std::size_t nb = rep.thresholds.size() + 1;
  std::vector<std::vector<std::size_t>> rows(nb);
  rep.bin_of.resize(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    rep.bin_of[i] = assign_bin(rep.thresholds, test_pred(static_cast<Eigen::Index>(i)));
    rows[rep.bin_of[i]].push_back(i);
  }

  std::vector<double> nums, dens;
  for (std::size_t b = 0; b < nb; ++b) {
    CalibrationBin bin;
    bin.lower = b == 0 ? -std::numeric_limits<double>::infinity() : rep.thresholds[b - 1];
    bin.upper = b + 1 == nb ? std::numeric_limits<double>::infinity() : rep.thresholds[b];
    bin.count = rows[b].size();
    std::vector<double> y, d, wp;
    for (std::size_t i : rows[b]) {
      const auto ii = static_cast<Eigen::Index>(i);
      y.push_back(test.y_hat(ii));
      d.push_back(test.d(ii));
      wp.push_back(test.d(ii) * test_pred(ii));
      if (test.d(ii) != 0.0) ++bin.treated;
    }
    bin.numerator = pairwise_sum(y);
    bin.denominator = pairwise_sum(d);
    nums.push_back(bin.numerator);
    dens.push_back(bin.denominator);
    if (bin.denominator == 0.0) {
      bin.empty = true;
      bin.gatt_model = bin.att = bin.se = bin.ci_lo = bin.ci_hi = nan();
      rep.notes.push_back("bin " + std::to_string(b) + " has no treated test rows");
    } else {
      bin.gatt_model = pairwise_sum(wp) / bin.denominator;
      const BinStats s = bin_stats(test, rows[b]);
      bin.att = s.att;
      bin.se = s.se;
      bin.ci_lo = s.att - options.z * s.se;
      bin.ci_hi = s.att + options.z * s.se;
    }
    rep.bins.push_back(bin);
  }
  const double total_d = pairwise_sum(dens);
  if (total_d == 0.0) throw Error(kModule, op, "no treated test rows");
  rep.overall_att = pairwise_sum(nums) / total_d;

  if (options.bootstrap > 0) {
    Rng rng(options.seed);
    const std::size_t n = test.size();
    std::vector<std::vector<double>> draws(nb);
    std::vector<double> num(nb), den(nb);
    for (std::size_t r = 0; r < options.bootstrap; ++r) {
      std::fill(num.begin(), num.end(), 0.0);
      std::fill(den.begin(), den.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const auto i = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
        num[rep.bin_of[i]] += test.y_hat(static_cast<Eigen::Index>(i));
        den[rep.bin_of[i]] += test.d(static_cast<Eigen::Index>(i));
      }
      for (std::size_t b = 0; b < nb; ++b)
        if (den[b] != 0.0) draws[b].push_back(num[b] / den[b]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      CalibrationBin& bin = rep.bins[b];
      if (bin.empty || draws[b].size() < 2) continue;
      bin.se = sample_sd(draws[b]);
      bin.ci_lo = quantile7(draws[b], 0.025);
      bin.ci_hi = quantile7(draws[b], 0.975);
    }
  }
  return rep;
}

CalibrationReport calibrate(const CattModel& model, const PseudoOutcome& val, const PseudoOutcome& test,
                            std::size_t n_bins, const CalibrationOptions& options) {
  if (static_cast<std::size_t>(val.x.cols()) != model.arity() ||
      static_cast<std::size_t>(test.x.cols()) != model.arity())
    throw Error(kModule, "calibrate", "model expects " + std::to_string(model.arity()) + " features");
  return calibrate_predictions(model.predict(val.x), model.predict(test.x), test, n_bins, options);
}

CsvTable CalibrationReport::bins_csv() const {
  CsvTable t;
  t.header = {"bin", "lower", "upper", "count", "treated", "gatt_model", "att", "se", "ci_lo", "ci_hi", "empty"};
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const CalibrationBin& x = bins[b];
    t.rows.push_back({std::to_string(b), format_double(x.lower), format_double(x.upper), std::to_string(x.count),
                      std::to_string(x.treated), format_double(x.gatt_model), format_double(x.att),
                      format_double(x.se), format_double(x.ci_lo), format_double(x.ci_hi), x.empty ? "1" : "0"});
  }
  return t;
}

CsvTable CalibrationReport::plot_csv() const {
  CsvTable t;
  t.header = {"bin", "midpoint", "gatt_model", "att", "ci_lo", "ci_hi"};
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const CalibrationBin& x = bins[b];
    if (x.empty) continue;
    double mid = x.gatt_model;
    if (std::isfinite(x.lower) && std::isfinite(x.upper)) mid = 0.5 * (x.lower + x.upper);
    t.rows.push_back({std::to_string(b), format_double(mid), format_double(x.gatt_model), format_double(x.att),
                      format_double(x.ci_lo), format_double(x.ci_hi)});
  }
  return t;
}

std::string CalibrationReport::json() const {
  nlohmann::ordered_json j;
  j["requested_bins"] = requested_bins;
  j["collapsed"] = collapsed;
  j["thresholds"] = thresholds;
  j["overall_att"] = number_or_null(overall_att);
  j["interval"] = bootstrap ? "bootstrap" : "delta";
  auto& arr = j["bins"] = nlohmann::ordered_json::array();
  for (const auto& b : bins) {
    nlohmann::ordered_json e;
    e["count"] = b.count;
    e["treated"] = b.treated;
    e["gatt_model"] = number_or_null(b.gatt_model);
    e["att"] = number_or_null(b.att);
    e["se"] = number_or_null(b.se);
    e["ci_lo"] = number_or_null(b.ci_lo);
    e["ci_hi"] = number_or_null(b.ci_hi);
    e["empty"] = b.empty;
    arr.push_back(std::move(e));
  }
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

}  // namespace didcatt
