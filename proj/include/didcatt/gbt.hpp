#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "didcatt/numeric.hpp"

namespace didcatt {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] <= threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, learning rate already applied
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const Matrix& x, Eigen::Index row) const;
};

struct GbtParams {
  int max_depth = 3;
  int rounds = 100;
  double learning_rate = 0.1;
  double reg_lambda = 1.0;         // L2 on leaf values (added to the hessian sum)
  double min_child_hessian = 1.0;  // minimum hessian mass per child
  double min_split_gain = 1e-12;
  int early_stop_patience = 0;     // 0 disables; otherwise hold out a validation slice
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Second-order objective for boosting, evaluated one row at a time.
struct GbtObjective {
  /// (gradient, hessian) of the row loss at the current raw prediction.
  std::function<std::pair<double, double>(std::size_t row, double pred)> grad_hess;
  std::function<double(std::size_t row, double pred)> loss;
};

class GbtEnsemble {
 public:
  GbtEnsemble() = default;
  GbtEnsemble(double base_score, std::vector<RegressionTree> trees)
      : base_score_(base_score), trees_(std::move(trees)) {}

  Vector predict(const Matrix& x) const;
  double base_score() const { return base_score_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }

  void write(std::ostream& out) const;
  static GbtEnsemble read(std::istream& in);

 private:
  double base_score_ = 0.0;
  std::vector<RegressionTree> trees_;
};

struct GbtFit {
  GbtEnsemble model;
  /// Mean training loss before the first round and after every round.
  std::vector<double> loss_trace;
};

/// Level-wise exact-greedy gradient boosting on presorted features.
GbtFit fit_gbt(const Matrix& x, const GbtObjective& objective, double base_score,
               const GbtParams& params);

}  // namespace didcatt
