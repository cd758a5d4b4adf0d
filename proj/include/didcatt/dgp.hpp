#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "didcatt/covshift.hpp"
#include "didcatt/csv.hpp"
#include "didcatt/iv.hpp"
#include "didcatt/panel.hpp"

namespace didcatt {

/// cpt: conditional parallel trends. violated: trends depend on |Y_pre|.
/// imbalanced: cpt with propensities scaled by 0.1. high_dim: cpt, d_W = 100.
/// shifted: no hidden confounder; propensity and effect both load on a
/// covariate outside X, so treated and control differ strongly in it.
enum class DgpVariant { kCpt, kViolated, kImbalanced, kHighDim, kShifted };
std::string to_string(DgpVariant v);
DgpVariant dgp_variant_from_string(const std::string& name);

struct DgpConfig {
  DgpVariant variant = DgpVariant::kCpt;
  std::size_t n = 5000;
  std::size_t d_w = 20;  // forced to 100 by high_dim
  std::size_t d_u = 5;
  std::size_t x_dim = 5;  // X = first x_dim covariates
  std::uint64_t seed = 0;              // sample draws
  std::optional<std::uint64_t> coefficient_seed;  // defaults to seed
  double clip_lo = 0.1;
  double clip_hi = 0.9;
  double imbalance = 0.1;
  double noise_sd = 0.5;
  bool zero_effect = false;
  double shift_strength = 3.0;  // shifted variant: logit slope on the shifted covariate
  std::size_t shift_col = 6;    // shifted variant: index of that covariate (outside X)

  std::size_t effective_d_w() const { return variant == DgpVariant::kHighDim ? 100 : d_w; }
  std::uint64_t coef_seed() const { return coefficient_seed.value_or(seed); }
  void validate() const;
};

/// Frozen per-config coefficients.
struct DgpCoefficients {
  Vector mu_w, mu_u, beta_d, alpha_u, beta_y, gamma;
  std::vector<char> keep;  // W_masked: 1 where the coordinate is kept

  static DgpCoefficients draw(const DgpConfig& config);
};

struct SimulatedPanel {
  DgpConfig config;
  DgpCoefficients coef;
  PanelDataset panel;
  std::vector<std::size_t> x_cols;
  Vector theta;     // unit-level effect; equals the CATT at X except for shifted
  Vector pi0;       // P(D=1 | W), hidden confounder integrated out
  Vector g0;        // E[S | D=0, W]; NaN where no closed form exists (violated)
  Vector p;         // realized assignment probability (depends on U)
  Vector y_pre;     // Y_0
  Vector y_post0;   // Y_1(0)
  Vector y_post1;   // Y_1(1)
  Vector d;

  TwoPeriodView view(Transform transform = Transform::kParallelTrends) const;
  /// unit, theta, pi0, g0, p, y_pre, y_post0, y_post1, d
  CsvTable oracle_csv() const;
};

SimulatedPanel simulate(const DgpConfig& config);

/// 0.5 * W1 * 1(W2 > 0) row-wise (zero under zero_effect); shifted adds W_k - mu_k.
Vector true_catt(const DgpConfig& config, const Matrix& w);
Vector true_catt(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w);
/// Oracle propensity with the confounder integrated out by quadrature.
Vector true_propensity(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w);
/// Closed-form E[dY | D=0, W] (cpt family and shifted).
Vector true_trend(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w);

/// E_z[clip(sigmoid(k z^2), lo, hi)] for z ~ N(0, 1).
double expected_clipped_sigmoid(double k, double lo, double hi);

// IV-DiD generator ----------------------------------------------------------

/// Exposure Z ~ Bern(clip(sigmoid(a^T (W - mu)))); types drawn independently
/// of Z given W: complier (D_post = Z), always-taker (D_post = 1), never-taker.
/// Nobody is treated at the pre period. Effect tau(X) is constant or 0.5 * X1.
struct IvConfig {
  std::size_t n = 5000;
  std::size_t d_w = 5;
  std::size_t x_dim = 2;
  double complier_rate = 0.6;
  double always_rate = 0.2;  // never-takers take the rest
  enum class Effect { kConstant, kLinear } effect = Effect::kConstant;
  double effect_value = 1.0;
  double noise_sd = 0.5;
  double clip_lo = 0.1, clip_hi = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedIv {
  IvConfig config;
  PanelDataset panel;
  IvView view;
  Vector clate;  // tau(X_i)
  Vector pi0;    // P(Z=1 | W)
  Vector g_y0;   // E[dY | Z=0, W]
  Vector g_d0;   // E[dD | Z=0, W]
};

SimulatedIv simulate_iv(const IvConfig& config);

// Semi-synthetic recipe -------------------------------------------------------

/// coef * prod_j column_j ^ power_j
struct RecipeTerm {
  double coef = 1.0;
  std::vector<std::pair<std::string, double>> factors;
};

struct RecipeFunction {
  double constant = 0.0;
  std::vector<RecipeTerm> terms;

  double eval(const CsvTable& table, std::size_t row) const;
  std::vector<std::string> columns() const;
};

struct SemiSynthConfig {
  std::size_t n = 10000;
  std::string pre_outcome;           // base column holding Y_pre
  std::vector<std::string> covariates;  // W columns kept (recipe columns are added)
  std::vector<std::string> x_columns;   // heterogeneity columns (subset of W)
  RecipeFunction score;   // P(D=1) = sigmoid(score)
  RecipeFunction trend;   // Y_post(0) - Y_pre
  RecipeFunction effect;  // Y_post(1) - Y_post(0)
  double noise_sd = 0.0;

  /// Default recipe over columns region3, region4, lavg_pay, lpop, years_after, with pre outcome lemp.
  static SemiSynthConfig default_recipe();
};

SimulatedPanel semisynthetic(const CsvTable& base, const SemiSynthConfig& recipe, std::uint64_t seed);
SimulatedPanel semisynthetic(const std::filesystem::path& base, const SemiSynthConfig& recipe, std::uint64_t seed);

// Covariate-shift generator -------------------------------------------------

/// W ~ N(mu_E, I) with mu_1 - mu_0 = shift along every coordinate;
/// Y = g0(W) + noise with g0(W) = W1 + 0.5 W2^2 + sin(W3), observed on E=0 only.
struct ShiftConfig {
  std::size_t n = 5000;
  std::size_t d_w = 3;
  std::size_t x_dim = 1;
  double target_share = 0.5;
  double shift = 0.5;
  double noise_sd = 0.5;
  std::uint64_t seed = 0;
};

struct SimulatedShift {
  ShiftView view;
  Vector g0;   // E[Y | W]
  Vector pi0;  // P(E=1 | W)
};

SimulatedShift simulate_shift(const ShiftConfig& config);
double shift_true_g(const Eigen::Ref<const Eigen::RowVectorXd>& w);

}  // namespace didcatt
