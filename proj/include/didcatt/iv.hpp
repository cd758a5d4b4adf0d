#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "didcatt/catt.hpp"
#include "didcatt/crossfit.hpp"
#include "didcatt/panel.hpp"

namespace didcatt {

/// IV-DiD estimation rows: exposure Z and the outcome / adoption contrasts.
struct IvView {
  Matrix w;
  std::vector<std::size_t> x_cols;
  Vector z;
  Vector dy;  // outcome contrast (Y_post under the lagged transform)
  Vector dd;  // adoption contrast (D_post under the lagged transform)
  std::vector<std::string> source_unit;
  std::vector<std::string> w_names;
  /// Lagged transform: g_Y conditions on (W, y_pre) and g_D on (W, d_pre).
  bool lagged = false;
  Vector y_pre;
  Vector d_pre;

  std::size_t size() const { return static_cast<std::size_t>(z.size()); }
  Matrix x() const;
  std::vector<std::string> x_names() const;
  IvView subset(std::span<const std::size_t> rows) const;
  void validate() const;
};

/// Builds an IvView from a panel carrying instrument and treatment columns.
IvView iv_view(const PanelDataset& data, std::size_t pre, std::size_t post, const std::vector<std::size_t>& x_cols,
               Transform transform);

struct IvNuisance {
  Vector g_y;
  Vector g_d;
  Vector pi;  // clipped P(Z=1 | W)
  FoldAssignment fold;
  double clip = 0.01;

  std::size_t size() const { return static_cast<std::size_t>(pi.size()); }
  void validate(std::size_t n) const;
  static IvNuisance from_arrays(Vector g_y, Vector g_d, const Vector& pi, double clip);
};

/// g_Y and g_D fitted on Z=0 rows only; pi on all rows.
IvNuisance cross_fit_iv(const IvView& view, std::size_t k, const LearnerSpec& g_spec, const LearnerSpec& pi_spec,
                        double clip, std::uint64_t seed, int jobs = 1);

struct IvPseudo {
  Vector a;
  Vector b;
  Matrix x;
  std::vector<std::size_t> x_cols;
  std::vector<std::string> x_names;
};

/// Zhat = (Z - pi)/(1 - pi); A = Zhat (dY - g_Y); B = Zhat (dD - g_D).
IvPseudo iv_pseudo(const IvView& view, const IvNuisance& nuis);

inline constexpr double kDefaultInstrumentFloor = 0.05;

struct LattResult {
  double estimate = 0.0;
  double se = 0.0;      // delta method for a ratio of means
  double mean_a = 0.0;
  double mean_b = 0.0;
  bool weak_instrument = false;  // |mean(B)| < c_z
};

LattResult latt(const Vector& a, const Vector& b, double c_z = kDefaultInstrumentFloor);

struct ClateFit {
  CattModel model;
  double mean_b = 0.0;
  bool weak_instrument = false;
  double smallest_eigenvalue = 0.0;  // of the regularized linear system
};

/// Minimizes (1/n) sum_i [B_i theta(x_i)^2 - 2 A_i theta(x_i)] over the linear class.
ClateFit fit_dr_clate(const IvPseudo& pseudo, const LearnerSpec& final_spec, double ridge_penalty = -1.0,
                      double c_z = kDefaultInstrumentFloor);

}  // namespace didcatt
