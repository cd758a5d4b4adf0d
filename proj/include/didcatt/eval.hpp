#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "didcatt/catt.hpp"
#include "didcatt/csv.hpp"
#include "didcatt/dgp.hpp"

namespace didcatt {

/// Mean of (theta_hat - theta0)^2 over treated test rows.
double mse_treated(const CattModel& model, const TwoPeriodView& test, const Vector& oracle_theta);
double mse_treated(const Vector& predicted, const Vector& d, const Vector& oracle_theta);

// Benchmark grid ---------------------------------------------------------------

/// dr, or, cate_or, cate_dr (treated rows), cate_dr_all (all rows).
struct LearnerSetup {
  std::string name;
  std::string estimator = "dr";
  LearnerSpec final_spec;
  double ridge_penalty = -1.0;
};

/// Nuisance learners; with oracle = true the generator's g0 and pi0 are used.
struct NuisanceSetup {
  std::string name;
  LearnerSpec g;
  LearnerSpec pi;
  std::size_t folds = 5;
  double clip = 0.01;
  bool oracle = false;
};

struct DgpSetup {
  std::string name;
  DgpConfig config;  // config.seed is replaced per replication
};

struct BenchmarkConfig {
  std::vector<DgpSetup> dgps;
  std::vector<NuisanceSetup> nuisances;
  std::vector<LearnerSetup> learners;
  std::size_t replications = 1;
  std::size_t n_test = 2000;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  void validate() const;
};

struct BenchmarkCell {
  std::string dgp, nuisance, learner;
  std::vector<double> mse;          // one entry per replication
  std::vector<std::uint64_t> seeds; // training-sample seed per replication
  double mean = 0.0;
  double sd = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkCell> cells;  // dgp-major, then nuisance, then learner
  std::size_t replications = 0;
  std::uint64_t master_seed = 0;
  double wall_clock_seconds = 0.0;  // kept out of every emitted file

  const BenchmarkCell& cell(const std::string& dgp, const std::string& nuisance, const std::string& learner) const;
  /// dgp, nuisance, learner, replication, seed, mse
  CsvTable results_csv() const;
  /// dgp, nuisance, learner, replications, mean_mse, sd_mse
  CsvTable summary_csv() const;
  std::string summary_json() const;
};

/// Replication seed for a DGP cell: keyed by name so adding cells leaves the
/// others untouched. Every learner in a (dgp, nuisance) pair sees the same data.
std::uint64_t replication_seed(std::uint64_t master, const std::string& dgp, std::size_t replication);

BenchmarkResult run_benchmark(const BenchmarkConfig& config);

/// Fits one estimator on a view with precomputed nuisances. g1_hat is needed by
/// the CATE baselines only.
CattModel fit_estimator(const LearnerSetup& setup, const TwoPeriodView& view, const NuisanceEstimates& nuis,
                        const Vector& g1_hat);
bool needs_treated_regression(const std::string& estimator);

// Calibration -------------------------------------------------------------------

struct CalibrationOptions {
  std::size_t bootstrap = 0;  // resamples; 0 keeps the delta-method interval
  std::uint64_t seed = 0;
  double z = 1.959963984540054;
};

struct CalibrationBin {
  double lower = 0.0;  // exclusive (bin 0: -inf)
  double upper = 0.0;  // inclusive (last bin: +inf)
  std::size_t count = 0;
  std::size_t treated = 0;
  double gatt_model = 0.0;  // mean prediction over treated rows in the bin
  double numerator = 0.0;   // sum of y_hat
  double denominator = 0.0; // sum of D
  double att = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool empty = false;  // no treated test rows
};

struct CalibrationReport {
  std::vector<double> thresholds;  // strictly increasing
  std::size_t requested_bins = 0;
  std::size_t collapsed = 0;  // bins lost to duplicate thresholds
  std::vector<CalibrationBin> bins;
  std::vector<std::size_t> bin_of;  // per test row
  double overall_att = 0.0;
  bool bootstrap = false;
  std::vector<std::string> notes;

  CsvTable bins_csv() const;
  /// Bin midpoint (by GATT), GATT, ATT and CI bounds for 45-degree plots.
  CsvTable plot_csv() const;
  std::string json() const;
};

/// Type-7 sample quantile.
double quantile7(std::vector<double> values, double q);

/// Bin index for a prediction: thresholds are upper-inclusive, so ties go to
/// the lower bin.
std::size_t assign_bin(const std::vector<double>& thresholds, double value);

CalibrationReport calibrate(const CattModel& model, const PseudoOutcome& val, const PseudoOutcome& test,
                            std::size_t n_bins, const CalibrationOptions& options = {});
/// Same, from predictions already computed on the validation and test rows.
CalibrationReport calibrate_predictions(const Vector& val_pred, const Vector& test_pred, const PseudoOutcome& test,
                                        std::size_t n_bins, const CalibrationOptions& options = {});

}  // namespace didcatt
