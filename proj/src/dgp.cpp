#include "didcatt/dgp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "didcatt/error.hpp"

namespace didcatt {

namespace {
constexpr const char* kModule = "dgp";

// 20-point Gauss-Legendre rule on [-1, 1], nodes by Newton iteration on P_20.
struct GaussLegendre {
  static constexpr int kN = 20;
  std::array<double, kN> x{}, w{};
  GaussLegendre() {
    for (int i = 0; i < kN; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (kN + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= kN; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = kN * (z * p1 - p0) / (z * z - 1.0);
        const double step = p1 / dp;
        z -= step;
        if (std::abs(step) < 1e-16) break;
      }
      x[static_cast<std::size_t>(i)] = z;
      w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }
};

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre rule;
  return rule;
}

template <class F>
double integrate(F&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  const auto& gl = gauss_legendre();
  const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / 0.5)));
  const double h = (b - a) / pieces;
  double total = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double lo = a + p * h, mid = lo + 0.5 * h;
    for (int i = 0; i < GaussLegendre::kN; ++i)
      total += 0.5 * h * gl.w[static_cast<std::size_t>(i)] * f(mid + 0.5 * h * gl.x[static_cast<std::size_t>(i)]);
  }
  return total;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Stand-in until the generated panel is assigned.
PanelDataset placeholder_panel(std::size_t periods) {
  UnitRecord u;
  u.id = "placeholder";
  u.outcomes.assign(periods, 0.0);
  std::vector<std::string> labels;
  for (std::size_t t = 0; t < periods; ++t) labels.push_back(std::to_string(t));
  return PanelDataset({u}, labels, {});
}

Vector uniform_vector(std::size_t n, double lo, double hi, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
  return v;
}

std::string unit_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%07zu", i);
  return buf;
}

std::vector<std::string> covariate_labels(std::size_t d) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < d; ++j) out.push_back("W" + std::to_string(j + 1));
  return out;
}

double masked_dot(const DgpCoefficients& c, const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (c.keep[static_cast<std::size_t>(j)]) s += c.beta_y(j) * w(j);
  return s;
}

double cpt_trend(const DgpCoefficients& c, const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  return (w(0) > 0 ? w(0) : 0.0) + masked_dot(c, w) + w(2) - w(1);
}

void check_w(const DgpConfig& config, const Matrix& w, const char* op) {
  if (static_cast<std::size_t>(w.cols()) != config.effective_d_w())
    throw Error(kModule, op, "W arity " + std::to_string(w.cols()) + " does not match d_W = " +
                                 std::to_string(config.effective_d_w()));
}

}  // namespace

std::string to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::kCpt: return "cpt";
    case DgpVariant::kViolated: return "violated";
    case DgpVariant::kImbalanced: return "imbalanced";
    case DgpVariant::kHighDim: return "high_dim";
    case DgpVariant::kShifted: return "shifted";
  }
  return "?";
}

DgpVariant dgp_variant_from_string(const std::string& name) {
  for (auto v : {DgpVariant::kCpt, DgpVariant::kViolated, DgpVariant::kImbalanced, DgpVariant::kHighDim,
                 DgpVariant::kShifted})
    if (to_string(v) == name) return v;
  throw Error(kModule, "DgpConfig", "unknown DGP variant '" + name + "'");
}

void DgpConfig::validate() const {
  constexpr const char* op = "DgpConfig";
  const std::size_t dw = effective_d_w();
  if (n < 1) throw Error(kModule, op, "n must be positive");
  if (dw < 6) throw Error(kModule, op, "d_W must be at least 6");
  if (d_u < 1) throw Error(kModule, op, "d_U must be positive");
  if (x_dim > dw) throw Error(kModule, op, "x_dim exceeds d_W");
  if (!(clip_lo > 0.0 && clip_lo < 0.5 && clip_hi > 0.5 && clip_hi < 1.0))
    throw Error(kModule, op, "propensity clip bounds must satisfy 0 < lo < 0.5 < hi < 1");
  if (!(imbalance > 0.0 && imbalance <= 1.0)) throw Error(kModule, op, "imbalance factor must lie in (0, 1]");
  if (!(noise_sd >= 0.0)) throw Error(kModule, op, "noise sd must be >= 0");
  if (variant == DgpVariant::kShifted && (shift_col < x_dim || shift_col >= dw))
    throw Error(kModule, op, "shift_col must index a covariate outside X");
}

DgpCoefficients DgpCoefficients::draw(const DgpConfig& config) {
  config.validate();
  const std::size_t dw = config.effective_d_w();
  Rng rng(derive_seed(config.coef_seed(), "coefficients"));
  DgpCoefficients c;
  c.mu_w = uniform_vector(dw, 0.0, 1.0, rng);
  c.mu_u = uniform_vector(config.d_u, 0.0, 1.0, rng);
  c.beta_d = uniform_vector(dw, -1.0, 1.0, rng);
  c.alpha_u = uniform_vector(config.d_u, -1.0, 1.0, rng);
  c.beta_y = uniform_vector(dw, -1.0, 1.0, rng);
  c.gamma = uniform_vector(dw, -1.0, 1.0, rng);
  std::vector<std::size_t> idx(dw);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_indices(idx, rng);
  c.keep.assign(dw, 1);
  for (std::size_t j = 0; j < dw / 2; ++j) c.keep[idx[j]] = 0;
  return c;
}

double expected_clipped_sigmoid(double k, double lo, double hi) {
  if (k == 0.0) return std::clamp(0.5, lo, hi);
  const double bound = k > 0 ? logit(hi) : logit(lo);
  const double z_star = std::sqrt(bound / k);
  const double cap = k > 0 ? hi : lo;
  const double upper = std::min(z_star, 12.0);
  const double inner = integrate([k](double z) { return normal_pdf(z) * sigmoid(k * z * z); }, 0.0, upper);
  return 2.0 * inner + cap * std::erfc(z_star / std::numbers::sqrt2);
}

Vector true_catt(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w) {
  check_w(config, w, "true_catt");
  Vector out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double t = config.zero_effect ? 0.0 : 0.5 * w(i, 0) * (w(i, 1) > 0 ? 1.0 : 0.0);
    if (config.variant == DgpVariant::kShifted && !config.zero_effect) {
      const auto k = static_cast<Eigen::Index>(config.shift_col);
      t += w(i, k) - coef.mu_w(k);
    }
    out(i) = t;
  }
  return out;
}

Vector true_catt(const DgpConfig& config, const Matrix& w) {
  return true_catt(config, DgpCoefficients::draw(config), w);
}

Vector true_propensity(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w) {
  check_w(config, w, "true_propensity");
  Vector out(w.rows());
  if (config.variant == DgpVariant::kShifted) {
    const auto k = static_cast<Eigen::Index>(config.shift_col);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      out(i) = std::clamp(sigmoid(config.shift_strength * (w(i, k) - coef.mu_w(k))), config.clip_lo, config.clip_hi);
    return out;
  }
  const double a2 = coef.alpha_u.squaredNorm();
  const double scale = config.variant == DgpVariant::kImbalanced ? config.imbalance : 1.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const double s = coef.beta_d.dot((w.row(i) - coef.mu_w.transpose()).transpose());
    out(i) = scale * expected_clipped_sigmoid(0.5 * s * a2, config.clip_lo, config.clip_hi);
  }
  return out;
}

Vector true_trend(const DgpConfig& config, const DgpCoefficients& coef, const Matrix& w) {
  check_w(config, w, "true_trend");
  Vector out(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    out(i) = config.variant == DgpVariant::kViolated ? std::numeric_limits<double>::quiet_NaN()
                                                     : cpt_trend(coef, w.row(i));
  return out;
}

SimulatedPanel simulate(const DgpConfig& config) {
  config.validate();
  SimulatedPanel sim{config, DgpCoefficients::draw(config), placeholder_panel(2),
                     {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const DgpCoefficients& c = sim.coef;
  const std::size_t n = config.n, dw = config.effective_d_w();
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix w(nn, static_cast<Eigen::Index>(dw));
  sim.p.resize(nn);
  sim.d.resize(nn);
  sim.y_pre.resize(nn);
  sim.y_post0.resize(nn);
  sim.y_post1.resize(nn);

  Rng rng(derive_seed(config.seed, "sample"));
  const bool shifted = config.variant == DgpVariant::kShifted;
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (std::size_t j = 0; j < dw; ++j) w(i, static_cast<Eigen::Index>(j)) = c.mu_w(static_cast<Eigen::Index>(j)) + standard_normal(rng);
    double conf = 0.0;  // alpha_U^T (U - mu_U)
    for (std::size_t j = 0; j < config.d_u; ++j) conf += c.alpha_u(static_cast<Eigen::Index>(j)) * standard_normal(rng);
    const double q = conf * conf;
    const double ud = uniform01(rng);
    const double e0 = config.noise_sd * standard_normal(rng);
    const double e1 = config.noise_sd * standard_normal(rng);

    double p;
    if (shifted) {
      const auto k = static_cast<Eigen::Index>(config.shift_col);
      p = std::clamp(sigmoid(config.shift_strength * (w(i, k) - c.mu_w(k))), config.clip_lo, config.clip_hi);
    } else {
      const double s = c.beta_d.dot((w.row(i) - c.mu_w.transpose()).transpose());
      p = std::clamp(sigmoid(0.5 * s * q), config.clip_lo, config.clip_hi);
      if (config.variant == DgpVariant::kImbalanced) p *= config.imbalance;
    }
    sim.p(i) = p;
    sim.d(i) = ud < p ? 1.0 : 0.0;

    const auto wi = w.row(i);
    if (config.variant == DgpVariant::kViolated) {
      sim.y_pre(i) = q * wi(5) + wi(1) + e0;
      const double m = std::abs(sim.y_pre(i));
      double quad = 0.0;
      for (Eigen::Index j = 0; j < wi.size(); ++j) quad += c.gamma(j) * wi(j) * wi(j);
      sim.y_post0(i) = q * wi(5) + m * quad + (wi(0) > 0 ? wi(1) : 0.0) + e1;
    } else if (shifted) {
      sim.y_pre(i) = wi(1) + e0;
      sim.y_post0(i) = (wi(0) > 0 ? wi(0) : 0.0) + masked_dot(c, wi) + wi(2) + e1;
    } else {
      sim.y_pre(i) = 5.0 * q * wi(5) + wi(1) + e0;
      sim.y_post0(i) = 5.0 * q * wi(5) + (wi(0) > 0 ? wi(0) : 0.0) + masked_dot(c, wi) + wi(2) + e1;
    }
  }
  sim.theta = true_catt(config, c, w);
  sim.y_post1 = sim.y_post0 + sim.theta;
  sim.pi0 = true_propensity(config, c, w);
  sim.g0 = true_trend(config, c, w);

  std::vector<UnitRecord> units(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    UnitRecord& u = units[i];
    u.id = unit_id(i);
    const double y1 = sim.d(ii) == 1.0 ? sim.y_post1(ii) : sim.y_post0(ii);
    u.outcomes = {sim.y_pre(ii), y1};
    u.cohort = sim.d(ii) == 1.0 ? 1 : kNeverTreated;
    u.covariates.resize(dw);
    for (std::size_t j = 0; j < dw; ++j) u.covariates[j] = w(ii, static_cast<Eigen::Index>(j));
  }
  sim.panel = PanelDataset(std::move(units), {"0", "1"}, covariate_labels(dw));
  for (std::size_t j = 0; j < config.x_dim; ++j) sim.x_cols.push_back(j);
  return sim;
}

TwoPeriodView SimulatedPanel::view(Transform transform) const { return two_period(panel, 0, 1, x_cols, transform); }

CsvTable SimulatedPanel::oracle_csv() const {
  CsvTable t;
  t.header = {"unit", "theta", "pi0", "g0", "p", "y_pre", "y_post0", "y_post1", "d"};
  for (std::size_t i = 0; i < panel.num_units(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    t.rows.push_back({panel.unit(i).id, format_double(theta(ii)), format_double(pi0(ii)), format_double(g0(ii)),
                      format_double(p(ii)), format_double(y_pre(ii)), format_double(y_post0(ii)),
                      format_double(y_post1(ii)), format_double(d(ii))});
  }
  return t;
}

// IV --------------------------------------------------------------------------

void IvConfig::validate() const {
  constexpr const char* op = "simulate_iv";
  if (n < 1 || d_w < 2 || x_dim < 1 || x_dim > d_w) throw Error(kModule, op, "invalid dimensions");
  if (!(complier_rate >= 0.0 && complier_rate <= 1.0 && always_rate >= 0.0 && always_rate <= 1.0) ||
      complier_rate + always_rate > 1.0 + 1e-12)
    throw Error(kModule, op, "compliance shares must lie in [0, 1] and sum to at most 1");
  if (!(clip_lo > 0.0 && clip_lo < 0.5 && clip_hi > 0.5 && clip_hi < 1.0))
    throw Error(kModule, op, "clip bounds must satisfy 0 < lo < 0.5 < hi < 1");
  if (!(noise_sd >= 0.0)) throw Error(kModule, op, "noise sd must be >= 0");
}

SimulatedIv simulate_iv(const IvConfig& config) {
  config.validate();
  Rng crng(derive_seed(config.seed, "iv_coefficients"));
  const Vector mu = uniform_vector(config.d_w, 0.0, 1.0, crng);
  const Vector a = uniform_vector(config.d_w, -1.0, 1.0, crng);
  Rng rng(derive_seed(config.seed, "iv_sample"));
  const auto n = static_cast<Eigen::Index>(config.n);
  SimulatedIv sim{config, placeholder_panel(1), {}, {}, {}, {}, {}};
  sim.clate.resize(n);
  sim.pi0.resize(n);
  sim.g_y0.resize(n);
  sim.g_d0.resize(n);
  std::vector<UnitRecord> units(config.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector w(static_cast<Eigen::Index>(config.d_w));
    for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = mu(j) + standard_normal(rng);
    const double index = a.dot(w - mu);
    const double pz = std::clamp(sigmoid(index), config.clip_lo, config.clip_hi);
    const double z = uniform01(rng) < pz ? 1.0 : 0.0;
    const double ut = uniform01(rng);
    const double d_post = ut < config.complier_rate ? z : (ut < config.complier_rate + config.always_rate ? 1.0 : 0.0);
    const double e0 = config.noise_sd * standard_normal(rng);
    const double e1 = config.noise_sd * standard_normal(rng);
    const double tau = config.effect == IvConfig::Effect::kConstant ? config.effect_value : 0.5 * w(0);
    const double base = w(0) + 0.5 * w(1);
    const double trend = w(0) + 0.5 * w(1) * w(1) + 0.5 * index;
    UnitRecord& u = units[static_cast<std::size_t>(i)];
    u.id = unit_id(static_cast<std::size_t>(i));
    u.outcomes = {base + e0, base + trend + d_post * tau + e1};
    u.covariates.assign(w.data(), w.data() + w.size());
    u.instrument = static_cast<int>(z);
    u.treatments = {0.0, d_post};
    sim.clate(i) = tau;
    sim.pi0(i) = pz;
    sim.g_y0(i) = trend + config.always_rate * tau;
    sim.g_d0(i) = config.always_rate;
  }
  std::vector<std::size_t> x_cols;
  for (std::size_t j = 0; j < config.x_dim; ++j) x_cols.push_back(j);
  sim.panel = PanelDataset(std::move(units), {"0", "1"}, covariate_labels(config.d_w));
  sim.view = iv_view(sim.panel, 0, 1, x_cols, Transform::kParallelTrends);
  return sim;
}

// Semi-synthetic --------------------------------------------------------------

double RecipeFunction::eval(const CsvTable& table, std::size_t row) const {
  double total = constant;
  for (const auto& term : terms) {
    double v = term.coef;
    for (const auto& [col, power] : term.factors) {
      const std::size_t c = table.require(col, kModule, "semisynthetic");
      const auto x = parse_double(table.rows[row][c]);
      if (!x) throw Error(kModule, "semisynthetic", "non-numeric value in column '" + col + "'");
      v *= power == 1.0 ? *x : std::pow(*x, power);
    }
    total += v;
  }
  if (!std::isfinite(total)) throw Error(kModule, "semisynthetic", "recipe produced a non-finite value");
  return total;
}

std::vector<std::string> RecipeFunction::columns() const {
  std::vector<std::string> out;
  for (const auto& t : terms)
    for (const auto& f : t.factors)
      if (std::find(out.begin(), out.end(), f.first) == out.end()) out.push_back(f.first);
  return out;
}

SemiSynthConfig SemiSynthConfig::default_recipe() {
  SemiSynthConfig r;
  r.pre_outcome = "lemp";
  r.covariates = {"region3", "region4", "lavg_pay", "lpop", "years_after"};
  r.x_columns = {"lpop"};
  r.score.constant = -10.0;
  r.score.terms = {{2.0, {{"region3", 1.0}}}, {-2.0, {{"region4", 1.0}}}, {1.0, {{"lavg_pay", 1.0}}}};
  r.trend.terms = {{0.1, {{"lavg_pay", 1.0}}},
                   {0.1, {{"region3", 1.0}}},
                   {0.1, {{"years_after", 1.0}}},
                   {1.0, {{"region4", 1.0}, {"years_after", 2.0}}},
                   {1.0, {{"lavg_pay", 0.5}, {"lpop", 1.0}}}};
  r.effect.terms = {{0.1, {{"lpop", 1.0}}}, {0.1, {{"lpop", 0.5}}}};
  return r;
}

SimulatedPanel semisynthetic(const CsvTable& base, const SemiSynthConfig& recipe, std::uint64_t seed) {
  constexpr const char* op = "semisynthetic";
  if (base.rows.empty()) throw Error(kModule, op, "base table has no rows");
  if (recipe.n < 1) throw Error(kModule, op, "n must be positive");
  std::vector<std::string> cov = recipe.covariates;
  for (const auto* f : {&recipe.score, &recipe.trend, &recipe.effect})
    for (const auto& c : f->columns())
      if (std::find(cov.begin(), cov.end(), c) == cov.end()) cov.push_back(c);
  std::vector<std::size_t> cov_idx;
  for (const auto& c : cov) cov_idx.push_back(base.require(c, kModule, op));
  const std::size_t y_idx = base.require(recipe.pre_outcome, kModule, op);
  std::vector<std::size_t> x_cols;
  for (const auto& c : recipe.x_columns) {
    const auto it = std::find(cov.begin(), cov.end(), c);
    if (it == cov.end()) throw Error(kModule, op, "x column '" + c + "' is not a covariate");
    x_cols.push_back(static_cast<std::size_t>(it - cov.begin()));
  }
  std::sort(x_cols.begin(), x_cols.end());
  x_cols.erase(std::unique(x_cols.begin(), x_cols.end()), x_cols.end());

  const auto n = static_cast<Eigen::Index>(recipe.n);
  SimulatedPanel sim{DgpConfig{}, DgpCoefficients{}, placeholder_panel(2),
                     x_cols, Vector(n), Vector(n), Vector(n), Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
  sim.config.n = recipe.n;
  sim.config.seed = seed;
  Rng rng(derive_seed(seed, "bootstrap"));
  std::vector<UnitRecord> units(recipe.n);
  const double rows = static_cast<double>(base.rows.size());
  auto number = [&](std::size_t r, std::size_t c) {
    const auto v = parse_double(base.rows[r][c]);
    if (!v) throw Error(kModule, op, "non-numeric value in column '" + base.header[c] + "'");
    return *v;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = std::min(base.rows.size() - 1, static_cast<std::size_t>(uniform01(rng) * rows));
    const double pi = sigmoid(recipe.score.eval(base, r));
    const double d = uniform01(rng) < pi ? 1.0 : 0.0;
    const double noise = recipe.noise_sd > 0.0 ? recipe.noise_sd * standard_normal(rng) : 0.0;
    const double y0 = number(r, y_idx);
    const double trend = recipe.trend.eval(base, r);
    const double eff = recipe.effect.eval(base, r);
    sim.theta(i) = eff;
    sim.pi0(i) = pi;
    sim.g0(i) = trend;
    sim.p(i) = pi;
    sim.y_pre(i) = y0;
    sim.y_post0(i) = y0 + trend + noise;
    sim.y_post1(i) = sim.y_post0(i) + eff;
    sim.d(i) = d;
    UnitRecord& u = units[static_cast<std::size_t>(i)];
    u.id = unit_id(static_cast<std::size_t>(i));
    u.outcomes = {y0, d == 1.0 ? sim.y_post1(i) : sim.y_post0(i)};
    u.cohort = d == 1.0 ? 1 : kNeverTreated;
    for (auto c : cov_idx) u.covariates.push_back(number(r, c));
  }
  sim.panel = PanelDataset(std::move(units), {"0", "1"}, cov);
  return sim;
}

SimulatedPanel semisynthetic(const std::filesystem::path& base, const SemiSynthConfig& recipe, std::uint64_t seed) {
  return semisynthetic(read_csv(base), recipe, seed);
}

// Covariate shift ---------------------------------------------------------------

double shift_true_g(const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  return w(0) + 0.5 * w(1) * w(1) + std::sin(w(2));
}

SimulatedShift simulate_shift(const ShiftConfig& config) {
  if (config.d_w < 3 || config.x_dim > config.d_w || config.n < 2 ||
      !(config.target_share > 0.0 && config.target_share < 1.0))
    throw Error(kModule, "simulate_shift", "invalid configuration");
  Rng rng(derive_seed(config.seed, "shift_sample"));
  const auto n = static_cast<Eigen::Index>(config.n);
  const auto d = static_cast<Eigen::Index>(config.d_w);
  SimulatedShift sim;
  ShiftView& v = sim.view;
  v.w.resize(n, d);
  v.e.resize(n);
  v.y.resize(n);
  sim.g0.resize(n);
  sim.pi0.resize(n);
  const double base_logit = logit(config.target_share);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = uniform01(rng) < config.target_share ? 1.0 : 0.0;
    double sum = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      v.w(i, j) = e * config.shift + standard_normal(rng);
      sum += v.w(i, j);
    }
    const double noise = config.noise_sd * standard_normal(rng);
    v.e(i) = e;
    sim.g0(i) = shift_true_g(v.w.row(i));
    v.y(i) = e == 0.0 ? sim.g0(i) + noise : std::numeric_limits<double>::quiet_NaN();
    sim.pi0(i) = sigmoid(base_logit + config.shift * sum - 0.5 * static_cast<double>(d) * config.shift * config.shift);
  }
  for (std::size_t j = 0; j < config.x_dim; ++j) v.x_cols.push_back(j);
  v.w_names = covariate_labels(config.d_w);
  return sim;
}

}  // namespace didcatt
