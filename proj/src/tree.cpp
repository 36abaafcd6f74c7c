// Copyright 2026 The NAMformer Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "namformer/tree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>

namespace namformer {
namespace {

struct Stats {
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double y) {
    n += 1.0;
    sum += y;
    sum_sq += y * y;
  }
  // SSE for regression; n * Gini for binary labels.
  double impurity(TreeTask task) const {
    if (n == 0.0) return 0.0;
    if (task == TreeTask::kRegression) return std::max(0.0, sum_sq - sum * sum / n);
    const double p = sum / n;
    return n * 2.0 * p * (1.0 - p);
  }
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Candidate {
  std::size_t node = 0;
  std::vector<std::size_t> rows;
  std::optional<Split> split;
};

class Grower {
 public:
  Grower(const Tensor& xs, std::span<const double> ys, const TreeConfig& config)
      : xs_(xs), ys_(ys), config_(config), d_(xs.extent(1)) {}

  DecisionTree grow() {
    std::vector<std::size_t> all(ys_.size());
    std::iota(all.begin(), all.end(), 0);
    nodes_.push_back(make_leaf(all, 0));
    std::vector<Candidate> open;
    if (auto split = best_split(all, 0)) open.push_back(Candidate{0, std::move(all), split});

    std::size_t leaves = 1;
    while (config_.max_leaves == 0 || leaves < config_.max_leaves) {
      // Best-first: largest gain, earliest node on ties.
      auto best = open.end();
      for (auto it = open.begin(); it != open.end(); ++it) {
        if (best == open.end() || it->split->gain > best->split->gain) best = it;
      }
      if (best == open.end()) break;
      Candidate cand = std::move(*best);
      open.erase(best);

      std::vector<std::size_t> left_rows;
      std::vector<std::size_t> right_rows;
      for (std::size_t r : cand.rows) {
        (x(r, cand.split->feature) < cand.split->threshold ? left_rows : right_rows).push_back(r);
      }
      const std::size_t depth = nodes_[cand.node].depth + 1;
      const std::size_t left_id = nodes_.size();
      nodes_.push_back(make_leaf(left_rows, depth));
      const std::size_t right_id = nodes_.size();
      nodes_.push_back(make_leaf(right_rows, depth));
      DecisionTree::Node& parent = nodes_[cand.node];
      parent.feature = cand.split->feature;
      parent.threshold = cand.split->threshold;
      parent.left = left_id;
      parent.right = right_id;
      ++leaves;

      Candidate l{left_id, std::move(left_rows), std::nullopt};
      l.split = best_split(l.rows, depth);
      Candidate r{right_id, std::move(right_rows), std::nullopt};
      r.split = best_split(r.rows, depth);
      // Appending keeps `open` ordered by node id, so ties go to the earliest node.
      if (l.split) open.push_back(std::move(l));
      if (r.split) open.push_back(std::move(r));
    }
    return DecisionTree(std::move(nodes_));
  }

 private:
  double x(std::size_t row, std::size_t col) const { return xs_[row * d_ + col]; }

  DecisionTree::Node make_leaf(const std::vector<std::size_t>& rows, std::size_t depth) const {
    DecisionTree::Node node;
    double total = 0.0;
    for (std::size_t r : rows) total += ys_[r];
    node.prediction = rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
    node.samples = rows.size();
    node.depth = depth;
    return node;
  }

  std::optional<Split> best_split(const std::vector<std::size_t>& rows, std::size_t depth) const {
    const std::size_t n = rows.size();
    if (n < std::max<std::size_t>(2, config_.min_samples_split)) return std::nullopt;
    if (n < 2 * config_.min_samples_leaf) return std::nullopt;
    if (config_.max_depth && depth >= *config_.max_depth) return std::nullopt;

    Stats parent;
    for (std::size_t r : rows) parent.add(ys_[r]);
    // Exact zero-impurity check; the running-sum form can leave rounding residue.
    const double mean = parent.sum / parent.n;
    bool pure = true;
    for (std::size_t r : rows) {
      if (ys_[r] != mean) {
        pure = false;
        break;
      }
    }
    if (pure) return std::nullopt;
    const double parent_impurity = parent.impurity(config_.task);

    std::optional<Split> best;
    std::vector<std::size_t> order(rows);
    for (std::size_t f = 0; f < d_; ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double xa = x(a, f);
        const double xb = x(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      Stats left;
      Stats right = parent;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double y = ys_[order[i]];
        left.add(y);
        right.n -= 1.0;
        right.sum -= y;
        right.sum_sq -= y * y;
        const double lo = x(order[i], f);
        const double hi = x(order[i + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t n_left = i + 1;
        if (n_left < config_.min_samples_leaf || n - n_left < config_.min_samples_leaf) continue;
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold > lo)) threshold = hi;  // adjacent doubles
        const double gain =
            parent_impurity - left.impurity(config_.task) - right.impurity(config_.task);
        if (!best || gain > best->gain || (gain == best->gain && threshold < best->threshold)) {
          best = Split{f, threshold, gain};
        }
      }
    }
    if (best && !(best->gain > 0.0)) return std::nullopt;
    return best;
  }

  const Tensor& xs_;
  std::span<const double> ys_;
  const TreeConfig& config_;
  std::size_t d_;
  std::vector<DecisionTree::Node> nodes_;
};

}  // namespace

double DecisionTree::predict(std::span<const double> x) const {
  if (nodes_.empty()) throw std::logic_error("DecisionTree::predict: empty tree");
  std::size_t id = 0;
  while (nodes_[id].feature) {
    const Node& node = nodes_[id];
    id = x[*node.feature] < node.threshold ? node.left : node.right;
  }
  return nodes_[id].prediction;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return !n.feature; }));
}

std::vector<double> DecisionTree::thresholds() const {
  std::vector<double> out;
  for (const Node& n : nodes_) {
    if (n.feature) out.push_back(n.threshold);
  }
  return out;
}

DecisionTree fit_tree(const Tensor& xs, std::span<const double> ys, const TreeConfig& config) {
  if (xs.rank() != 2) {
    throw std::invalid_argument("fit_tree: xs must be [n, d], got " + shape_string(xs.shape()));
  }
  if (xs.extent(0) == 0 || xs.extent(1) == 0 || ys.empty()) {
    throw std::invalid_argument("fit_tree: empty input");
  }
  if (xs.extent(0) != ys.size()) {
    throw std::invalid_argument("fit_tree: " + std::to_string(xs.extent(0)) + " rows but " +
                                std::to_string(ys.size()) + " targets");
  }
  if (config.min_samples_leaf == 0) {
    throw std::invalid_argument("fit_tree: min_samples_leaf must be positive");
  }
  if (config.max_leaves == 1) {
    throw std::invalid_argument("fit_tree: max_leaves must be 0 (unbounded) or >= 2");
  }
  for (double v : xs.values()) {
    if (v != v) throw std::invalid_argument("fit_tree: NaN in features");
  }
  for (double v : ys) {
    if (v != v) throw std::invalid_argument("fit_tree: NaN in targets");
    if (config.task == TreeTask::kClassification && v != 0.0 && v != 1.0) {
      throw std::invalid_argument("fit_tree: classification labels must be 0 or 1");
    }
  }
  return Grower(xs, ys, config).grow();
}

double tree_training_loss(const DecisionTree& tree, const Tensor& xs, std::span<const double> ys,
                          TreeTask task) {
  const std::size_t d = xs.extent(1);
  std::vector<Stats> per_node(tree.nodes().size());
  for (std::size_t r = 0; r < ys.size(); ++r) {
    std::size_t id = 0;
    const auto row = xs.values().subspan(r * d, d);
    while (tree.nodes()[id].feature) {
      const auto& node = tree.nodes()[id];
      id = row[*node.feature] < node.threshold ? node.left : node.right;
    }
    per_node[id].add(ys[r]);
  }
  double total = 0.0;
  for (std::size_t id = 0; id < per_node.size(); ++id) {
    if (tree.nodes()[id].feature) continue;
    if (task == TreeTask::kRegression) {
      // Direct residual sum against the leaf mean for accuracy.
      const double m = tree.nodes()[id].prediction;
      total += std::max(0.0, per_node[id].sum_sq - 2.0 * m * per_node[id].sum +
                                 per_node[id].n * m * m);
    } else {
      total += per_node[id].impurity(task);
    }
  }
  return total;
}

Boundaries extract_boundaries(std::span<const double> x, std::span<const double> y,
                              std::size_t max_bins) {
  if (x.size() != y.size()) throw std::invalid_argument("extract_boundaries: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("extract_boundaries: need at least 2 points");
  if (max_bins < 2) throw std::invalid_argument("extract_boundaries: max_bins must be >= 2");

  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Boundaries out;
  if (lo < hi) {
    TreeConfig config;
    config.max_leaves = max_bins;
    Tensor xs(Shape{x.size(), 1}, std::vector<double>(x.begin(), x.end()));
    out.thresholds = fit_tree(xs, y, config).thresholds();
    std::sort(out.thresholds.begin(), out.thresholds.end());
    out.thresholds.erase(std::unique(out.thresholds.begin(), out.thresholds.end()),
                         out.thresholds.end());
  }
  if (out.thresholds.empty()) {
    out.thresholds = {lo + (hi - lo) / 2.0};
    out.degenerate = true;
  }
  return out;
}

}  // namespace namformer
