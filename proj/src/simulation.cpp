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

#include "namformer/simulation.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <stdexcept>

#include "namformer/random.hpp"

namespace namformer {
namespace {

struct LevelEffect {
  const char* level;
  double effect;
};

const std::array<std::vector<LevelEffect>, kCategoricalFeatureCount>& effect_table() {
  static const std::array<std::vector<LevelEffect>, kCategoricalFeatureCount> table = {{
      {{"A", 0.5}, {"B", -0.5}, {"C", 0.0}},
      {{"D", 1.0}, {"E", -1.0}},
      {{"F", 0.2}, {"G", -0.2}, {"H", 0.1}, {"I", -0.1}},
  }};
  return table;
}

void check_feature(std::size_t feature) {
  if (feature < 1 || feature > kCategoricalFeatureCount) {
    throw std::invalid_argument("categorical feature index " + std::to_string(feature) +
                                " outside 1.." + std::to_string(kCategoricalFeatureCount));
  }
}

}  // namespace

void SimConfig::validate() const {
  if (numeric_features < 1 || numeric_features > kShapeFunctionCount) {
    throw std::invalid_argument("simulation: numeric_features must lie in 1..10");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("simulation: noise_std must be >= 0");
  if (n < 1) throw std::invalid_argument("simulation: n must be >= 1");
}

double shape_function(std::size_t k, double x) {
  switch (k) {
    case 1: return 3.0 * x;
    case 2: return (x - 1.0) * (x - 1.0);
    case 3: return std::sin(5.0 * x);
    case 4: return std::sqrt(std::exp(x));
    case 5: return std::abs(x - 1.0);
    case 6: return std::abs(x - std::sin(5.0 * x));
    case 7: {
      const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      return sign * std::sqrt(std::abs(x));
    }
    case 8: return std::exp2(x) - x * x;
    case 9: return x * x * x - 3.0 * x;
    case 10: return std::exp(x + 1e-6);
    default:
      throw std::invalid_argument("shape function index " + std::to_string(k) +
                                  " outside 1..10");
  }
}

double shape_function_mean(std::size_t k) {
  static std::array<double, kShapeFunctionCount> cache = [] {
    std::array<double, kShapeFunctionCount> means{};
    using boost::math::quadrature::gauss_kronrod;
    for (std::size_t i = 0; i < kShapeFunctionCount; ++i) {
      const auto f = [i](double x) { return shape_function(i + 1, x); };
      means[i] = gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 20, 1e-14);
    }
    return means;
  }();
  if (k < 1 || k > kShapeFunctionCount) {
    throw std::invalid_argument("shape function index " + std::to_string(k) + " outside 1..10");
  }
  return cache[k - 1];
}

const std::vector<std::string>& categorical_levels(std::size_t feature) {
  static const std::array<std::vector<std::string>, kCategoricalFeatureCount> levels = [] {
    std::array<std::vector<std::string>, kCategoricalFeatureCount> out;
    for (std::size_t f = 0; f < kCategoricalFeatureCount; ++f) {
      for (const LevelEffect& le : effect_table()[f]) out[f].emplace_back(le.level);
    }
    return out;
  }();
  check_feature(feature);
  return levels[feature - 1];
}

double categorical_effect(std::size_t feature, const std::string& level) {
  check_feature(feature);
  for (const LevelEffect& le : effect_table()[feature - 1]) {
    if (level == le.level) return le.effect;
  }
  throw std::invalid_argument("categorical feature " + std::to_string(feature) +
                              " has no level '" + level + "'");
}

double categorical_effect_mean(std::size_t feature) {
  check_feature(feature);
  double total = 0.0;
  for (const LevelEffect& le : effect_table()[feature - 1]) total += le.effect;
  return total / static_cast<double>(effect_table()[feature - 1].size());
}

double SimDataset::reconstruct(std::size_t row) const {
  double y = 0.0;
  for (const std::vector<double>& s : shape_values) y += s[row];
  y += categorical_effects[row];
  y += interaction[row];
  return y + noise[row];
}

double SimDataset::conditional_mean(std::size_t k, double x) const {
  const std::size_t J = config.numeric_features;
  if (k < 1 || k > J) throw std::invalid_argument("conditional_mean: feature out of range");
  double m = shape_function(k, x);
  for (std::size_t j = 1; j <= J; ++j) {
    if (j != k) m += shape_function_mean(j);
  }
  if (config.categoricals) {
    for (std::size_t f = 1; f <= kCategoricalFeatureCount; ++f) m += categorical_effect_mean(f);
  }
  if (config.interaction) m += x * std::pow(0.5, static_cast<double>(J - 1));
  return m;
}

double SimDataset::conditional_mean_categorical(std::size_t f, const std::string& level) const {
  if (!config.categoricals) throw std::invalid_argument("conditional_mean: no categorical features");
  double m = categorical_effect(f, level);
  for (std::size_t g = 1; g <= kCategoricalFeatureCount; ++g) {
    if (g != f) m += categorical_effect_mean(g);
  }
  for (std::size_t j = 1; j <= config.numeric_features; ++j) m += shape_function_mean(j);
  if (config.interaction) m += std::pow(0.5, static_cast<double>(config.numeric_features));
  return m;
}

SimDataset generate(const SimConfig& config) {
  config.validate();
  const std::size_t J = config.numeric_features;
  const std::size_t n = config.n;
  SimDataset sim;
  sim.config = config;
  Dataset& data = sim.data;
  for (std::size_t j = 1; j <= J; ++j) {
    data.features.push_back(FeatureSpec{"x" + std::to_string(j), FeatureKind::kNumeric,
                                        NumericEncoding::kPle});
  }
  if (config.categoricals) {
    for (std::size_t f = 1; f <= kCategoricalFeatureCount; ++f) {
      data.features.push_back(
          FeatureSpec{"cat" + std::to_string(f), FeatureKind::kCategorical, std::nullopt});
    }
  }
  data.columns.resize(data.features.size());
  sim.shape_values.assign(J, std::vector<double>(n));
  sim.categorical_effects.assign(n, 0.0);
  sim.interaction.assign(n, 0.0);
  sim.noise.assign(n, 0.0);
  data.target.resize(n);

  Rng rng(config.seed);
  for (std::size_t r = 0; r < n; ++r) {
    double product = 1.0;
    for (std::size_t j = 0; j < J; ++j) {
      const double x = rng.uniform();
      data.columns[j].numeric.push_back(x);
      sim.shape_values[j][r] = shape_function(j + 1, x);
      product *= x;
    }
    if (config.categoricals) {
      double effect = 0.0;
      for (std::size_t f = 1; f <= kCategoricalFeatureCount; ++f) {
        const std::vector<std::string>& levels = categorical_levels(f);
        const std::string& level = levels[rng.below(levels.size())];
        data.columns[J + f - 1].levels.push_back(level);
        effect += categorical_effect(f, level);
      }
      sim.categorical_effects[r] = effect;
    }
    if (config.interaction) sim.interaction[r] = product;
    if (config.noise_std > 0.0) sim.noise[r] = rng.normal(0.0, config.noise_std);
    data.target[r] = sim.reconstruct(r);
  }
  return sim;
}

std::vector<double> true_centered_marginal(std::size_t k, std::span<const double> grid) {
  std::vector<double> values;
  values.reserve(grid.size());
  double m = 0.0;
  for (double x : grid) {
    values.push_back(shape_function(k, x));
    m += values.back();
  }
  if (!values.empty()) m /= static_cast<double>(values.size());
  for (double& v : values) v -= m;
  return values;
}

}  // namespace namformer
