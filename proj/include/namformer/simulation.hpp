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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "namformer/data.hpp"

namespace namformer {

constexpr std::size_t kShapeFunctionCount = 10;
constexpr std::size_t kCategoricalFeatureCount = 3;

struct SimConfig {
  std::size_t n = 25000;
  std::size_t numeric_features = 3;  // J, selects s_1..s_J
  bool categoricals = true;
  double noise_std = 0.1;
  bool interaction = true;  // include prod_j x_j
  std::uint64_t seed = 0;

  void validate() const;
};

// s_1(x) = 3x, s_2(x) = (x - 1)^2, s_3(x) = sin(5x), s_4(x) = sqrt(exp(x)),
// s_5(x) = |x - 1|, s_6(x) = |x - sin(5x)|, s_7(x) = sign(x) sqrt(|x|),
// s_8(x) = 2^x - x^2, s_9(x) = x^3 - 3x, s_10(x) = exp(x + 1e-6).
double shape_function(std::size_t k, double x);

// Integral of s_k over [0, 1], i.e. E[s_k(U)] for U ~ Uniform(0, 1).
double shape_function_mean(std::size_t k);

const std::vector<std::string>& categorical_levels(std::size_t feature);
double categorical_effect(std::size_t feature, const std::string& level);
// Average effect over the feature's levels (the mean under uniform sampling).
double categorical_effect_mean(std::size_t feature);

struct SimDataset {
  SimConfig config;
  Dataset data;  // features x1..xJ, cat1..cat3; target y
  std::vector<std::vector<double>> shape_values;  // [J][n]: s_j(x_j)
  std::vector<double> categorical_effects;        // summed per row
  std::vector<double> interaction;                // prod_j x_j, or 0 when disabled
  std::vector<double> noise;

  // y reassembled from the stored components in generation order.
  double reconstruct(std::size_t row) const;
  // Analytic E[y | x_k = x] under the generating process (k is 1-based).
  double conditional_mean(std::size_t k, double x) const;
  // Analytic E[y | cat_f = level] (f is 1-based).
  double conditional_mean_categorical(std::size_t f, const std::string& level) const;
};

SimDataset generate(const SimConfig& config);

// s_k on the grid minus its mean over the grid.
std::vector<double> true_centered_marginal(std::size_t k, std::span<const double> grid);

}  // namespace namformer
