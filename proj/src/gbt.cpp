#include "didcatt/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "didcatt/csv.hpp"
#include "didcatt/error.hpp"

namespace didcatt {

double RegressionTree::predict_row(const Matrix& x, Eigen::Index row) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(k)];
    k = x(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(k)].value;
}

Vector GbtEnsemble::predict(const Matrix& x) const {
  Vector out = Vector::Constant(x.rows(), base_score_);
  for (const auto& t : trees_)
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) += t.predict_row(x, i);
  return out;
}

void GbtEnsemble::write(std::ostream& out) const {
  out << "base_score " << format_double(base_score_) << "\n";
  out << "trees " << trees_.size() << "\n";
  for (const auto& t : trees_) {
    out << "tree " << t.nodes.size() << "\n";
    for (const auto& nd : t.nodes)
      out << nd.feature << ' ' << format_double(nd.threshold) << ' ' << nd.left << ' ' << nd.right << ' '
          << format_double(nd.value) << "\n";
  }
}

namespace {

double read_double_token(std::istream& in) {
  std::string tok;
  in >> tok;
  auto v = parse_double(tok);
  if (!v) {
    if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error("catt_core", "load_model", "malformed number '" + tok + "'");
  }
  return *v;
}

void expect_token(std::istream& in, const std::string& want) {
  std::string tok;
  in >> tok;
  if (tok != want) throw Error("catt_core", "load_model", "expected '" + want + "', found '" + tok + "'");
}

}  // namespace

GbtEnsemble GbtEnsemble::read(std::istream& in) {
  expect_token(in, "base_score");
  const double base = read_double_token(in);
  expect_token(in, "trees");
  std::size_t n_trees = 0;
  in >> n_trees;
  std::vector<RegressionTree> trees(n_trees);
  for (auto& t : trees) {
    expect_token(in, "tree");
    std::size_t n_nodes = 0;
    in >> n_nodes;
    t.nodes.resize(n_nodes);
    for (auto& nd : t.nodes) {
      in >> nd.feature;
      nd.threshold = read_double_token(in);
      in >> nd.left >> nd.right;
      nd.value = read_double_token(in);
    }
    if (!in) throw Error("catt_core", "load_model", "truncated tree block");
  }
  return GbtEnsemble(base, std::move(trees));
}

GbtFit fit_gbt(const Matrix& x, const GbtObjective& objective, double base_score,
               const GbtParams& params) {
  constexpr const char* kModule = "nuisance";
  constexpr const char* op = "fit_gbt";
  if (params.max_depth < 1) throw Error(kModule, op, "tree depth must be >= 1");
  if (params.rounds < 1) throw Error(kModule, op, "boosting rounds must be >= 1");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
    throw Error(kModule, op, "learning rate must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (n == 0) throw Error(kModule, op, "no training rows");

  // Train / validation split for early stopping.
  std::vector<std::size_t> train(n), valid;
  std::iota(train.begin(), train.end(), std::size_t{0});
  if (params.early_stop_patience > 0 && n >= 10) {
    Rng rng(splitmix64(params.seed ^ 0x6762745fULL));
    shuffle_indices(train, rng);
    const auto n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(params.validation_fraction * n));
    valid.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_valid));
    train.erase(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_valid));
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
  }

  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t j = 0; j < d; ++j) {
    auto& s = sorted[j];
    s.reserve(train.size());
    for (auto i : train) s.push_back(static_cast<std::uint32_t>(i));
    const auto col = static_cast<Eigen::Index>(j);
    std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) {
      return x(static_cast<Eigen::Index>(a), col) < x(static_cast<Eigen::Index>(b), col);
    });
  }

  std::vector<double> pred(n, base_score);
  std::vector<double> grad(n, 0.0), hess(n, 0.0);
  std::vector<int> node_of(n, -1);

  auto mean_loss = [&](const std::vector<std::size_t>& rows) {
    std::vector<double> l;
    l.reserve(rows.size());
    for (auto i : rows) l.push_back(objective.loss(i, pred[i]));
    return mean(l);
  };

  GbtFit fit;
  fit.loss_trace.push_back(mean_loss(train));
  std::vector<RegressionTree> trees;
  double best_valid = valid.empty() ? 0.0 : mean_loss(valid);
  std::size_t best_rounds = 0;
  int since_best = 0;

  const double lambda = params.reg_lambda;
  auto score = [lambda](double g, double h) { return g * g / (h + lambda); };

  for (int round = 0; round < params.rounds; ++round) {
    for (auto i : train) {
      auto [g, h] = objective.grad_hess(i, pred[i]);
      grad[i] = g;
      hess[i] = h;
      node_of[i] = 0;
    }

    struct Stat {
      double g = 0.0, h = 0.0;
    };
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<Stat> stats(1);
    for (auto i : train) {
      stats[0].g += grad[i];
      stats[0].h += hess[i];
    }

    std::vector<int> active = {0};
    for (int depth = 0; depth < params.max_depth && !active.empty(); ++depth) {
      std::vector<int> local_of(tree.nodes.size(), -1);
      for (std::size_t k = 0; k < active.size(); ++k) local_of[static_cast<std::size_t>(active[k])] = static_cast<int>(k);

      const std::size_t m = active.size();
      std::vector<double> best_gain(m, params.min_split_gain);
      std::vector<int> best_feature(m, -1);
      std::vector<double> best_threshold(m, 0.0);
      std::vector<double> gl(m), hl(m), last(m);
      std::vector<char> any(m);

      for (std::size_t j = 0; j < d; ++j) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(any.begin(), any.end(), 0);
        const auto col = static_cast<Eigen::Index>(j);
        for (auto ui : sorted[j]) {
          const std::size_t i = ui;
          const int k = local_of[static_cast<std::size_t>(node_of[i])];
          if (k < 0) continue;
          const auto kk = static_cast<std::size_t>(k);
          const double v = x(static_cast<Eigen::Index>(i), col);
          if (any[kk] && v > last[kk]) {
            const Stat& tot = stats[static_cast<std::size_t>(active[kk])];
            const double hr = tot.h - hl[kk];
            if (hl[kk] >= params.min_child_hessian && hr >= params.min_child_hessian) {
              const double gain = score(gl[kk], hl[kk]) + score(tot.g - gl[kk], hr) - score(tot.g, tot.h);
              if (gain > best_gain[kk]) {
                best_gain[kk] = gain;
                best_feature[kk] = static_cast<int>(j);
                best_threshold[kk] = last[kk];
              }
            }
          }
          gl[kk] += grad[i];
          hl[kk] += hess[i];
          last[kk] = v;
          any[kk] = 1;
        }
      }

      std::vector<int> next;
      for (std::size_t k = 0; k < m; ++k) {
        if (best_feature[k] < 0) continue;
        const int id = active[k];
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        stats.emplace_back();
        stats.emplace_back();
        TreeNode& nd = tree.nodes[static_cast<std::size_t>(id)];
        nd.feature = best_feature[k];
        nd.threshold = best_threshold[k];
        nd.left = left;
        nd.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      for (auto i : train) {
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node_of[i])];
        if (nd.feature < 0) continue;
        const int child = x(static_cast<Eigen::Index>(i), nd.feature) <= nd.threshold ? nd.left : nd.right;
        node_of[i] = child;
        stats[static_cast<std::size_t>(child)].g += grad[i];
        stats[static_cast<std::size_t>(child)].h += hess[i];
      }
      active = std::move(next);
    }

    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      TreeNode& nd = tree.nodes[k];
      if (nd.feature >= 0) continue;
      const double denom = stats[k].h + lambda;
      nd.value = denom > 0.0 ? -params.learning_rate * stats[k].g / denom : 0.0;
    }
    for (auto i : train) pred[i] += tree.nodes[static_cast<std::size_t>(node_of[i])].value;
    for (auto i : valid) pred[i] += tree.predict_row(x, static_cast<Eigen::Index>(i));
    trees.push_back(std::move(tree));
    fit.loss_trace.push_back(mean_loss(train));

    if (!valid.empty()) {
      const double vl = mean_loss(valid);
      if (vl < best_valid) {
        best_valid = vl;
        best_rounds = trees.size();
        since_best = 0;
      } else if (++since_best >= params.early_stop_patience) {
        break;
      }
    }
  }
  if (!valid.empty()) {
    trees.resize(std::max<std::size_t>(best_rounds, 1));
    fit.loss_trace.resize(trees.size() + 1);
  }
  fit.model = GbtEnsemble(base_score, std::move(trees));
  return fit;
}

}  // namespace didcatt
