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

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "namformer/tensor.hpp"

namespace namformer {

enum class TreeTask { kRegression, kClassification };

struct TreeConfig {
  std::size_t max_leaves = 0;  // 0: unbounded
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 2;
  std::optional<std::size_t> max_depth;
  TreeTask task = TreeTask::kRegression;
};

// CART tree grown best-first. Inputs go left when x[feature] < threshold.
class DecisionTree {
 public:
  struct Node {
    std::optional<std::size_t> feature;  // empty for leaves
    double threshold = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
    double prediction = 0.0;  // mean target (regression) or positive-class share
    std::size_t samples = 0;
    std::size_t depth = 0;
  };

  DecisionTree() = default;
  explicit DecisionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t leaf_count() const;
  // Thresholds of every internal node, in node order.
  std::vector<double> thresholds() const;

 private:
  std::vector<Node> nodes_;
};

// xs has shape [n, d]. Splits are chosen by exhaustive search over midpoints
// of consecutive distinct values; equal-gain candidates resolve to the
// smallest threshold.
DecisionTree fit_tree(const Tensor& xs, std::span<const double> ys, const TreeConfig& config);

// Training loss of a fitted tree: SSE (regression) or sample-weighted Gini.
double tree_training_loss(const DecisionTree& tree, const Tensor& xs, std::span<const double> ys,
                          TreeTask task);

struct Boundaries {
  std::vector<double> thresholds;  // strictly increasing
  bool degenerate = false;         // no split was possible; single midpoint fallback
};

// Target-aware bin boundaries from a one-dimensional tree with at most
// max_bins leaves.
Boundaries extract_boundaries(std::span<const double> x, std::span<const double> y,
                              std::size_t max_bins);

}  // namespace namformer
