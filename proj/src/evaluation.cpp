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

#include "namformer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "namformer/random.hpp"
#include "namformer/tree.hpp"

namespace namformer {

double r2(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("r2: length mismatch");
  if (actual.size() < 2) throw std::invalid_argument("r2: need at least two values");
  const double m = mean_of(actual);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    ss_tot += (actual[i] - m) * (actual[i] - m);
  }
  if (!(ss_tot > 0.0)) throw std::invalid_argument("r2: actual values are constant");
  return 1.0 - ss_res / ss_tot;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      const double label = labels[order[t]];
      if (label != 0.0 && label != 1.0) throw std::invalid_argument("auc: labels must be 0 or 1");
      if (label == 1.0) {
        positives += 1.0;
        rank_sum += avg_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw std::invalid_argument("auc: both classes must be present");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double accuracy(std::span<const double> probabilities, std::span<const double> labels,
                double threshold) {
  if (probabilities.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("accuracy: length mismatch or empty input");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double predicted = probabilities[i] >= threshold ? 1.0 : 0.0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

MarginalRecoveryReport marginal_recovery(const NamFormer& model, const EncoderState& encoders,
                                         const Dataset& train, const ShapeTruth& truth,
                                         std::size_t grid_size) {
  MarginalRecoveryReport report;
  std::vector<double> scores;
  for (std::size_t j = 0; j < encoders.feature_count(); ++j) {
    if (!encoders.features[j].numeric()) continue;
    const std::vector<double>& x = train.columns.at(j).numeric;
    if (x.empty()) throw std::invalid_argument("marginal_recovery: empty training column");
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const std::vector<double> grid = uniform_grid(*lo, *hi, grid_size);
    const ShapeCurve curve = extract_shape_function(model, encoders, j, grid);
    std::vector<double> expected;
    expected.reserve(grid.size());
    for (double g : grid) expected.push_back(truth(j, g));
    const double m = mean_of(expected);
    for (double& v : expected) v -= m;
    const double score = r2(curve.centered, expected);
    report.features.push_back(FeatureScore{encoders.features[j].spec.name, score});
    scores.push_back(score);
  }
  report.mean = mean_of(scores);
  report.stddev = sample_stddev(scores);
  return report;
}

std::string to_string(ProbeStage stage) {
  return stage == ProbeStage::kUncontextualized ? "uncontextualized" : "contextualized";
}

ProbeStage parse_probe_stage(const std::string& text) {
  if (text == "uncontextualized") return ProbeStage::kUncontextualized;
  if (text == "contextualized") return ProbeStage::kContextualized;
  throw std::invalid_argument("stage must be 'uncontextualized' or 'contextualized', got '" +
                              text + "'");
}

ProbeReport identifiability_probe(const NamFormer& model, const EncoderState& encoders,
                                  const Dataset& data, ProbeStage stage, std::uint64_t seed,
                                  double test_fraction) {
  const EncodedData encoded = encode_dataset(encoders, data);
  const std::vector<Tensor> tokens =
      stage == ProbeStage::kUncontextualized ? model.embed(encoded) : model.contextualize(encoded);
  const auto [train_rows, test_rows] = split_rows(data.rows(), test_fraction, seed);
  if (train_rows.empty() || test_rows.size() < 2) {
    throw std::invalid_argument("identifiability_probe: not enough rows to split");
  }
  const std::size_t e = model.config().embedding_dim;

  ProbeReport report;
  report.stage = stage;
  report.embedding_dim = e;
  std::vector<double> scores;
  for (std::size_t j = 0; j < model.feature_count(); ++j) {
    if (model.kinds()[j] != FeatureKind::kNumeric) continue;
    const std::vector<double>& x = data.columns[j].numeric;
    Tensor train_x(Shape{train_rows.size(), e});
    std::vector<double> train_y;
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      std::copy_n(tokens[j].data() + train_rows[i] * e, e, train_x.data() + i * e);
      train_y.push_back(x[train_rows[i]]);
    }
    const DecisionTree tree = fit_tree(train_x, train_y, TreeConfig{});
    std::vector<double> predicted;
    std::vector<double> actual;
    for (std::size_t r : test_rows) {
      predicted.push_back(tree.predict(tokens[j].values().subspan(r * e, e)));
      actual.push_back(x[r]);
    }
    const double score = r2(predicted, actual);
    report.features.push_back(FeatureScore{data.features[j].name, score});
    scores.push_back(score);
  }
  report.mean = mean_of(scores);
  return report;
}

double isolated_mask_probability(double p, std::size_t features) {
  return (1.0 - p) * std::pow(p, static_cast<double>(features));
}

double dropout_bound(double risk, double risk_without_k, double p_k) {
  if (!(p_k > 0.0 && p_k <= 1.0)) throw std::invalid_argument("dropout_bound: p_k must lie in (0, 1]");
  return (risk - risk_without_k * (1.0 - p_k)) / p_k;
}

double uniform_risk_bound(double risk, double p_k) {
  if (!(p_k > 0.0 && p_k <= 1.0)) {
    throw std::invalid_argument("uniform_risk_bound: p_k must lie in (0, 1]");
  }
  return dropout_bound(risk, risk * (1.0 - p_k), p_k);
}

std::vector<double> binned_conditional_mean(std::span<const double> x, std::span<const double> y,
                                            std::size_t bins) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("binned_conditional_mean: length mismatch or empty input");
  }
  if (bins == 0) throw std::invalid_argument("binned_conditional_mean: bins must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double width = (*hi_it - lo) / static_cast<double>(bins);
  auto bin_of = [&](double v) {
    if (!(width > 0.0)) return std::size_t{0};
    return std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
  };
  std::vector<double> total(bins, 0.0);
  std::vector<double> count(bins, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    total[bin_of(x[i])] += y[i];
    count[bin_of(x[i])] += 1.0;
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t b = bin_of(x[i]);
    out[i] = total[b] / count[b];
  }
  return out;
}

BoundReport bound_check(const NamFormer& model, const EncodedData& data,
                        const std::vector<std::optional<std::vector<double>>>& conditional_means,
                        double p, std::size_t samples, std::uint64_t seed,
                        const std::vector<std::string>& names) {
  if (model.config().task != Task::kRegression) {
    throw std::invalid_argument(
        "bound_check: only regression models with a distance-based loss are supported");
  }
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("bound_check: p must lie in (0, 1]");
  if (samples < 2) throw std::invalid_argument("bound_check: need at least two mask samples");
  const std::size_t features = model.feature_count();
  if (conditional_means.size() != features) {
    throw std::invalid_argument("bound_check: one conditional-mean slot per feature required");
  }
  const std::size_t n = data.rows();
  if (n == 0) throw std::invalid_argument("bound_check: empty data");

  // Components do not depend on the mask at inference, so masked predictions
  // are reassembled from the full breakdown.
  const std::vector<Breakdown> parts = model.predict(data);

  BoundReport report;
  report.p = p;
  report.samples = samples;
  Rng rng(seed);
  double total = 0.0;
  double total_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t row = rng.below(n);
    Breakdown b = parts[row];
    b.mask.assign(features + 1, 1.0);
    for (double& bit : b.mask) bit = rng.bernoulli(p) ? 0.0 : 1.0;
    const double residual = b.total() - data.target[row];
    const double loss = residual * residual;
    total += loss;
    total_sq += loss * loss;
  }
  const double ns = static_cast<double>(samples);
  report.risk = total / ns;
  const double var = std::max(0.0, (total_sq - ns * report.risk * report.risk) / (ns - 1.0));
  report.risk_se = std::sqrt(var / ns);
  report.twice_risk = 2.0 * report.risk;

  report.holds = true;
  for (std::size_t k = 0; k < features; ++k) {
    if (!conditional_means[k]) continue;
    const std::vector<double>& cm = *conditional_means[k];
    if (cm.size() != n) throw std::invalid_argument("bound_check: conditional-mean length mismatch");
    FeatureBound fb;
    fb.feature = k < names.size() ? names[k] : "feature" + std::to_string(k);
    double lhs = 0.0;
    double direct = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double marginal = parts[r].intercept + parts[r].shapes[k];
      lhs += (marginal - cm[r]) * (marginal - cm[r]);
      direct += (marginal - data.target[r]) * (marginal - data.target[r]);
    }
    fb.lhs = lhs / static_cast<double>(n);
    fb.direct_risk = direct / static_cast<double>(n);
    fb.mask_probability = isolated_mask_probability(p, features);
    fb.holds = fb.lhs <= report.twice_risk + 3.0 * report.risk_se;
    report.holds = report.holds && fb.holds;
    report.features.push_back(fb);
  }
  return report;
}

JensenReport jensen_loss_property(LossKind loss, const ConditionalLaw& law, std::size_t samples,
                                  std::size_t predictors, std::uint64_t seed) {
  if (samples < 2 || predictors == 0) {
    throw std::invalid_argument("jensen_loss_property: need samples >= 2 and predictors >= 1");
  }
  Rng rng(seed);
  std::vector<double> x(samples);
  std::vector<double> y(samples);
  std::vector<double> m(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    x[i] = rng.uniform();
    m[i] = law.mean(x[i]);
    if (loss == LossKind::kMse) {
      y[i] = law.noise_std > 0.0 ? rng.normal(m[i], law.noise_std) : m[i];
    } else {
      if (m[i] < 0.0 || m[i] > 1.0) {
        throw std::invalid_argument("jensen_loss_property: Bernoulli mean outside [0, 1]");
      }
      y[i] = rng.bernoulli(m[i]) ? 1.0 : 0.0;
    }
  }

  // Pointwise loss against a label or against the conditional mean; the
  // margin form h((2y - 1) c) covers both for logloss.
  auto pointwise = [&](double c, double target) {
    if (loss == LossKind::kMse) return (c - target) * (c - target);
    const double margin = (2.0 * target - 1.0) * c;
    return std::max(-margin, 0.0) + std::log1p(std::exp(-std::abs(margin)));
  };

  JensenReport report;
  report.loss = loss;
  report.predictors = predictors;
  report.inequality_holds = true;
  report.worst_gap = std::numeric_limits<double>::infinity();
  report.worst_gap_z = std::numeric_limits<double>::infinity();
  const double ns = static_cast<double>(samples);
  double mse_gap_total = 0.0;
  double mse_gap_se_sq = 0.0;
  for (std::size_t c = 0; c < predictors; ++c) {
    const double a = rng.normal(0.0, 1.0);
    const double b = rng.normal(0.0, 1.0);
    const double q = rng.normal(0.0, 1.0);
    double total = 0.0;
    double total_sq = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double pred = a + b * x[i] + q * x[i] * x[i];
      const double d = pointwise(pred, y[i]) - pointwise(pred, m[i]);
      total += d;
      total_sq += d * d;
    }
    const double gap = total / ns;
    const double var = std::max(0.0, (total_sq - ns * gap * gap) / (ns - 1.0));
    const double se = std::sqrt(var / ns);
    report.worst_gap = std::min(report.worst_gap, gap);
    if (se > 0.0) report.worst_gap_z = std::min(report.worst_gap_z, gap / se);
    if (gap < -3.0 * se) report.inequality_holds = false;
    mse_gap_total += gap;
    mse_gap_se_sq += se * se;
  }
  if (loss == LossKind::kMse) {
    report.irreducible = law.noise_std * law.noise_std;
    report.mse_gap = mse_gap_total / static_cast<double>(predictors);
    // Gaps share the same draws, so the per-predictor SE bounds the averaged one.
    report.mse_gap_se = std::sqrt(mse_gap_se_sq / static_cast<double>(predictors));
    report.decomposition_holds =
        std::abs(report.mse_gap - report.irreducible) <= 3.0 * report.mse_gap_se +
                                                             1e-12 * (1.0 + report.irreducible);
  }
  return report;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t begin = f * n / k;
    const std::size_t end = (f + 1) * n / k;
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                    order.begin() + static_cast<std::ptrdiff_t>(end));
    if (folds[f].size() < 2) {
      throw std::invalid_argument("kfold: fold " + std::to_string(f) + " has fewer than 2 rows");
    }
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

std::map<std::string, MetricSummary> crossvalidate(const Dataset& data, std::size_t k,
                                                   std::uint64_t seed, const FoldRunner& run) {
  const auto folds = kfold_indices(data.rows(), k, seed);
  std::map<std::string, MetricSummary> out;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<char> in_test(data.rows(), 0);
    for (std::size_t r : folds[f]) in_test[r] = 1;
    std::vector<std::size_t> train_rows;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      if (!in_test[r]) train_rows.push_back(r);
    }
    const FoldMetrics metrics = run(data.subset(train_rows), data.subset(folds[f]));
    for (const auto& [name, value] : metrics) out[name].per_fold.push_back(value);
  }
  for (auto& [name, summary] : out) {
    summary.mean = mean_of(summary.per_fold);
    summary.stddev = sample_stddev(summary.per_fold);
  }
  return out;
}

FoldMetrics evaluate_model(const NamFormer& model, const EncodedData& data) {
  const std::vector<double> eta = model.predict_eta(data);
  FoldMetrics metrics;
  if (model.config().task == Task::kRegression) {
    metrics["mse"] = loss_mse(eta, data.target);
  } else {
    std::vector<double> prob(eta.size());
    for (std::size_t i = 0; i < eta.size(); ++i) prob[i] = sigmoid(eta[i]);
    metrics["auc"] = auc(eta, data.target);
    metrics["accuracy"] = accuracy(prob, data.target);
    metrics["logloss"] = loss_logloss(eta, data.target);
  }
  return metrics;
}

std::map<std::string, MetricSummary> crossvalidate_namformer(const Dataset& data, std::size_t k,
                                                             const TrainConfig& train_config,
                                                             const ModelConfig& model_config,
                                                             const BinCounts& bins) {
  return crossvalidate(data, k, train_config.seed, [&](const Dataset& tr, const Dataset& te) {
    const EncoderState encoders = fit_encoders(tr, bins);
    const TrainResult result = train(tr, encoders, train_config, model_config);
    return evaluate_model(result.model, encode_dataset(encoders, te));
  });
}

}  // namespace namformer
