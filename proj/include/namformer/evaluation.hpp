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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "namformer/data.hpp"
#include "namformer/encoding.hpp"
#include "namformer/model.hpp"
#include "namformer/training.hpp"

namespace namformer {

// Coefficient of determination 1 - SS_res / SS_tot.
double r2(std::span<const double> predicted, std::span<const double> actual);

// Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties count 1/2.
double auc(std::span<const double> scores, std::span<const double> labels);

double accuracy(std::span<const double> probabilities, std::span<const double> labels,
                double threshold = 0.5);

double sigmoid(double x);

double mean_of(std::span<const double> v);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(std::span<const double> v);

struct FeatureScore {
  std::string feature;
  double r2 = 0.0;
};

struct MarginalRecoveryReport {
  std::vector<FeatureScore> features;
  double mean = 0.0;
  double stddev = 0.0;
};

// Truth for numeric feature `index` (0-based among the model's features) at x.
using ShapeTruth = std::function<double(std::size_t index, double x)>;

// Compares each numeric feature's centered shape curve with the centered
// truth on a uniform grid over [lo_j, hi_j] taken from `train`.
MarginalRecoveryReport marginal_recovery(const NamFormer& model, const EncoderState& encoders,
                                         const Dataset& train, const ShapeTruth& truth,
                                         std::size_t grid_size = 200);

enum class ProbeStage { kUncontextualized, kContextualized };
std::string to_string(ProbeStage stage);
ProbeStage parse_probe_stage(const std::string& text);

struct ProbeReport {
  ProbeStage stage = ProbeStage::kUncontextualized;
  std::size_t embedding_dim = 0;
  std::vector<FeatureScore> features;  // numeric features only
  double mean = 0.0;
};

// Fits a default regression tree from each numeric feature's embedding to the
// raw feature value on a seeded 70% split and reports test R^2.
ProbeReport identifiability_probe(const NamFormer& model, const EncoderState& encoders,
                                  const Dataset& data, ProbeStage stage, std::uint64_t seed = 0,
                                  double test_fraction = 0.3);

// Probability of the mask that keeps only shape output k: (1 - p) p^J.
double isolated_mask_probability(double p, std::size_t features);
// (R - R_{-k} (1 - p_k)) / p_k
double dropout_bound(double risk, double risk_without_k, double p_k);
// R (2 - p_k), the bound under uniformly spread risk.
double uniform_risk_bound(double risk, double p_k);

// Estimated E[y | x] by averaging y within equal-width bins of x.
std::vector<double> binned_conditional_mean(std::span<const double> x, std::span<const double> y,
                                            std::size_t bins = 50);

struct FeatureBound {
  std::string feature;
  double lhs = 0.0;           // E_x[L(beta_0 + f_k, E[y | x_k])]
  double direct_risk = 0.0;   // E[L(beta_0 + f_k, y)]
  double mask_probability = 0.0;
  bool holds = false;
};

struct BoundReport {
  double p = 0.0;
  std::size_t samples = 0;
  double risk = 0.0;     // Monte-Carlo estimate of the dropout risk
  double risk_se = 0.0;
  double twice_risk = 0.0;
  std::vector<FeatureBound> features;
  bool holds = false;
};

// conditional_means[j] holds E[y | x_j] per row, or nothing to skip feature j.
BoundReport bound_check(const NamFormer& model, const EncodedData& data,
                        const std::vector<std::optional<std::vector<double>>>& conditional_means,
                        double p, std::size_t samples, std::uint64_t seed,
                        const std::vector<std::string>& names = {});

struct JensenReport {
  LossKind loss = LossKind::kMse;
  std::size_t predictors = 0;
  double worst_gap = 0.0;        // smallest mean gap over predictors
  double worst_gap_z = 0.0;      // smallest gap / SE
  bool inequality_holds = false; // every gap >= -3 SE
  // MSE only: mean gap vs E[V[y | x]].
  double mse_gap = 0.0;
  double mse_gap_se = 0.0;
  double irreducible = 0.0;
  bool decomposition_holds = true;
};

// Synthetic conditional law for x ~ Uniform(0, 1). For mse, y | x ~
// Normal(mean(x), noise_std^2); for logloss, y | x ~ Bernoulli(mean(x)).
struct ConditionalLaw {
  std::function<double(double)> mean;
  double noise_std = 1.0;
};

JensenReport jensen_loss_property(LossKind loss, const ConditionalLaw& law, std::size_t samples,
                                  std::size_t predictors, std::uint64_t seed);

// Seeded k-fold partition of n rows into test folds of near-equal size.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed);

struct MetricSummary {
  std::vector<double> per_fold;
  double mean = 0.0;
  double stddev = 0.0;
};

using FoldMetrics = std::map<std::string, double>;
using FoldRunner = std::function<FoldMetrics(const Dataset& train, const Dataset& test)>;

std::map<std::string, MetricSummary> crossvalidate(const Dataset& data, std::size_t k,
                                                   std::uint64_t seed, const FoldRunner& run);

// Fits encoders and a NAMformer per fold; reports mse (regression) or auc and
// accuracy (classification) on the held-out fold.
std::map<std::string, MetricSummary> crossvalidate_namformer(const Dataset& data, std::size_t k,
                                                             const TrainConfig& train_config,
                                                             const ModelConfig& model_config,
                                                             const BinCounts& bins = {});

// Test-set metrics for a trained model.
FoldMetrics evaluate_model(const NamFormer& model, const EncodedData& data);

}  // namespace namformer
