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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "namformer/evaluation.hpp"
#include "namformer/simulation.hpp"

using namespace namformer;

namespace {

using Vec = std::vector<double>;

// Area under the ROC step curve by the trapezoid rule over distinct thresholds.
double trapezoid_auc(const Vec& scores, const Vec& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const double pos = std::count(labels.begin(), labels.end(), 1.0);
  const double neg = static_cast<double>(labels.size()) - pos;
  double tp = 0, fp = 0, prev_tp = 0, prev_fp = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1.0 ? tp : fp) += 1.0;
      ++j;
    }
    area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
    prev_tp = tp;
    prev_fp = fp;
    i = j;
  }
  return area / (pos * neg);
}

ModelConfig small(std::size_t e = 4) {
  ModelConfig c;
  c.embedding_dim = e;
  c.layers = 1;
  c.heads = 1;
  c.ffn_width = 4;
  c.head_layers = {};
  return c;
}

void zero_all(Parameters& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (double& v : p[i].values()) v = 0.0;
  }
}

// Sets feature j's shape output to the PLE interpolant of `truth` on its edges.
void encode_truth(NamFormer& model, const EncoderState& encoders, std::size_t j,
                  const std::function<double(double)>& truth) {
  const Vec& edges = encoders.features[j].as_numeric().boundaries;
  Parameters& p = model.parameters();
  const std::string prefix = "feature." + std::to_string(j);
  const std::size_t e = model.config().embedding_dim;
  for (double& v : p.at(prefix + ".weight").values()) v = 0.0;
  for (double& v : p.at(prefix + ".bias").values()) v = 0.0;
  for (std::size_t t = 1; t < edges.size(); ++t) {
    p.at(prefix + ".weight")[(t - 1) * e] = truth(edges[t]) - truth(edges[t - 1]);
  }
  p.at(prefix + ".bias")[0] = truth(edges[0]);
  for (double& v : p.at("shape." + std::to_string(j)).values()) v = 0.0;
  p.at("shape." + std::to_string(j))[0] = 1.0;
}

}  // namespace

TEST_CASE("r2") {
  const Vec a{0, 1, 2};
  CHECK(r2(a, a) == 1.0);
  CHECK(r2(Vec{1, 1, 1}, a) == 0.0);
  CHECK(r2(Vec{0, 0, 0}, a) == -1.5);
  CHECK_THROWS_AS(r2(a, Vec{2, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(r2(Vec{1}, Vec{1}), std::invalid_argument);
}

TEST_CASE("auc") {
  CHECK(auc(Vec{0.1, 0.9, 0.4}, Vec{0, 1, 0}) == 1.0);
  CHECK(auc(Vec{0.5, 0.5, 0.5, 0.5}, Vec{0, 1, 0, 1}) == 0.5);
  CHECK(auc(Vec{0.9, 0.1}, Vec{0, 1}) == 0.0);
  CHECK_THROWS_AS(auc(Vec{0.1, 0.2}, Vec{1, 1}), std::invalid_argument);
}

TEST_CASE("auc equals trapezoidal ROC integration") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    Vec scores(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform() * 10.0);  // plenty of ties
      labels[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    }
    labels[0] = 1.0;
    labels[1] = 0.0;
    CHECK(std::abs(auc(scores, labels) - trapezoid_auc(scores, labels)) <= 1e-12);
  }
}

TEST_CASE("accuracy, sigmoid and summaries") {
  CHECK(accuracy(Vec{0.2, 0.7, 0.5}, Vec{0, 1, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sample_stddev(Vec{1, 1, 1}) == 0.0);
  CHECK(sample_stddev(Vec{1, 3}) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("marginal recovery") {
  SimConfig c;
  c.n = 2000;
  c.categoricals = false;
  const SimDataset sim = generate(c);
  const EncoderState encoders = fit_encoders(sim.data, BinCounts{150, 100});
  Rng rng(2);
  NamFormer model(small(), encoders, rng);
  const ShapeTruth truth = [&](std::size_t j, double x) { return sim.conditional_mean(j + 1, x); };

  SUBCASE("hand-built shape nets that interpolate the truth") {
    for (std::size_t j = 0; j < 3; ++j) {
      encode_truth(model, encoders, j, [&, j](double x) { return truth(j, x); });
    }
    const MarginalRecoveryReport report = marginal_recovery(model, encoders, sim.data, truth);
    REQUIRE(report.features.size() == 3);
    for (const FeatureScore& f : report.features) CHECK(f.r2 >= 0.99);
    CHECK(report.mean <= 1.0);
  }
  SUBCASE("zero shape nets score zero") {
    for (std::size_t j = 0; j < 3; ++j) {
      for (double& v : model.parameters().at("shape." + std::to_string(j)).values()) v = 0.0;
    }
    const MarginalRecoveryReport report = marginal_recovery(model, encoders, sim.data, truth);
    for (const FeatureScore& f : report.features) CHECK(f.r2 == doctest::Approx(0.0));
    CHECK(report.stddev == doctest::Approx(0.0));
  }
}

TEST_CASE("identifiability probe") {
  SimConfig c;
  c.n = 1500;
  c.categoricals = false;
  const SimDataset sim = generate(c);

  SUBCASE("untrained thermometer embeddings are injective in the bin") {
    Dataset data = sim.data;
    for (FeatureSpec& f : data.features) f.encoding = NumericEncoding::kThermometer;
    const EncoderState encoders = fit_encoders(data, BinCounts{30, 25});
    Rng rng(3);
    const NamFormer model(small(8), encoders, rng);
    const ProbeReport report =
        identifiability_probe(model, encoders, data, ProbeStage::kUncontextualized, 1);
    CHECK(report.stage == ProbeStage::kUncontextualized);
    CHECK(report.embedding_dim == 8);
    for (const FeatureScore& f : report.features) CHECK(f.r2 >= 0.9);
    CHECK_NOTHROW(identifiability_probe(model, encoders, data, ProbeStage::kContextualized, 1));
  }
  SUBCASE("a one-dimensional identity embedding") {
    Dataset data = sim.data;
    for (FeatureSpec& f : data.features) f.encoding = NumericEncoding::kStandardize;
    const EncoderState encoders = fit_encoders(data);
    Rng rng(4);
    NamFormer model(small(1), encoders, rng);
    for (std::size_t j = 0; j < 3; ++j) {
      model.parameters().at("feature." + std::to_string(j) + ".weight")[0] = 1.0;
    }
    const ProbeReport report =
        identifiability_probe(model, encoders, data, ProbeStage::kUncontextualized, 1);
    for (const FeatureScore& f : report.features) CHECK(f.r2 > 0.999);
  }
  CHECK(parse_probe_stage("contextualized") == ProbeStage::kContextualized);
  CHECK_THROWS_AS(parse_probe_stage("Contextualized"), std::invalid_argument);
}

TEST_CASE("bound formulas") {
  CHECK(isolated_mask_probability(0.1, 3) == doctest::Approx(0.9 * 0.001));
  CHECK(dropout_bound(0.4, 0.7, 1.0) == 0.4);
  CHECK(uniform_risk_bound(0.5, 0.25) == doctest::Approx(0.5 * 1.75));
  CHECK_THROWS(dropout_bound(0.4, 0.2, 0.0));
}

TEST_CASE("bound check on a model that equals the truth") {
  SimConfig c;
  c.n = 1000;
  c.numeric_features = 1;
  c.categoricals = false;
  c.interaction = false;
  c.noise_std = 0.0;
  const SimDataset sim = generate(c);
  const EncoderState encoders = fit_encoders(sim.data);
  Rng rng(5);
  NamFormer model(small(), encoders, rng);
  zero_all(model.parameters());
  for (std::size_t l = 0; l < 1; ++l) {
    for (const char* norm : {"layer.0.attn_norm.scale", "layer.0.ffn_norm.scale", "final_norm.scale"}) {
      for (double& v : model.parameters().at(norm).values()) v = 1.0;
    }
  }
  encode_truth(model, encoders, 0, [](double x) { return shape_function(1, x); });
  const EncodedData data = encode_dataset(encoders, sim.data);
  std::vector<std::optional<Vec>> means(1);
  means[0] = Vec();
  for (double x : sim.data.columns[0].numeric) means[0]->push_back(sim.conditional_mean(1, x));

  const BoundReport report = bound_check(model, data, means, 0.1, 10000, 6, {"x1"});
  REQUIRE(report.features.size() == 1);
  CHECK(report.features[0].lhs < 1e-20);
  CHECK(report.features[0].feature == "x1");
  CHECK(report.holds);
  CHECK(report.twice_risk == 2.0 * report.risk);
  CHECK_THROWS_AS(bound_check(model, data, means, 1.5, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(bound_check(model, data, means, 0.0, 100, 1), std::invalid_argument);
}

TEST_CASE("Monte-Carlo risk matches the mask-weighted exact risk") {
  SimConfig c;
  c.n = 300;
  c.numeric_features = 2;
  c.categoricals = false;
  const SimDataset sim = generate(c);
  const EncoderState encoders = fit_encoders(sim.data);
  Rng rng(7);
  const NamFormer model(small(), encoders, rng, 0.5);
  const EncodedData data = encode_dataset(encoders, sim.data);
  const std::vector<Breakdown> parts = model.predict(data);
  const double p = 0.3;

  double exact = 0.0;
  for (unsigned w = 0; w < 8; ++w) {
    double prob = 1.0;
    DropoutMask mask(3);
    for (std::size_t k = 0; k < 3; ++k) {
      mask[k] = (w >> k) & 1u ? 1.0 : 0.0;
      prob *= mask[k] == 1.0 ? 1.0 - p : p;
    }
    double risk = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
      Breakdown b = parts[r];
      b.mask = mask;
      risk += (b.total() - data.target[r]) * (b.total() - data.target[r]);
    }
    exact += prob * risk / static_cast<double>(data.rows());
  }
  const std::vector<std::optional<Vec>> none(2);
  const BoundReport report = bound_check(model, data, none, p, 10000, 8);
  CHECK(std::abs(report.risk - exact) <= 3.0 * report.risk_se);
}

TEST_CASE("classification models are rejected by the bound check") {
  Dataset d;
  d.features = {FeatureSpec{"x", FeatureKind::kNumeric, NumericEncoding::kPle}};
  d.columns = {FeatureColumn{{0.1, 0.5, 0.9, 0.3}, {}}};
  d.target = {0, 1, 1, 0};
  const EncoderState encoders = fit_encoders(d);
  ModelConfig cfg = small();
  cfg.task = Task::kBinaryClassification;
  Rng rng(9);
  const NamFormer model(cfg, encoders, rng);
  CHECK_THROWS_AS(bound_check(model, encode_dataset(encoders, d), {std::nullopt}, 0.1, 10, 1),
                  std::invalid_argument);
}

TEST_CASE("binned conditional means") {
  const Vec x{0.0, 0.1, 0.9, 1.0};
  const Vec y{1.0, 3.0, 5.0, 7.0};
  CHECK(binned_conditional_mean(x, y, 2) == Vec{2, 2, 6, 6});
  CHECK(binned_conditional_mean(Vec{1, 1}, Vec{2, 4}, 5) == Vec{3, 3});
}

TEST_CASE("Jensen and the MSE decomposition") {
  SUBCASE("mse with unit noise: gap equals the conditional variance") {
    const ConditionalLaw law{[](double x) { return std::sin(3.0 * x); }, 1.0};
    const JensenReport r = jensen_loss_property(LossKind::kMse, law, 20000, 100, 1);
    CHECK(r.inequality_holds);
    CHECK(r.decomposition_holds);
    CHECK(r.irreducible == 1.0);
  }
  SUBCASE("logloss with Bernoulli labels") {
    const ConditionalLaw law{[](double x) { return 0.1 + 0.8 * x * x; }, 0.0};
    const JensenReport r = jensen_loss_property(LossKind::kLogloss, law, 20000, 100, 2);
    CHECK(r.inequality_holds);
    CHECK(r.predictors == 100);
  }
  SUBCASE("deterministic labels give equal sides") {
    const ConditionalLaw law{[](double x) { return 2.0 * x; }, 0.0};
    const JensenReport r = jensen_loss_property(LossKind::kMse, law, 500, 10, 3);
    CHECK(r.worst_gap == 0.0);
    const ConditionalLaw step{[](double x) { return x < 0.5 ? 0.0 : 1.0; }, 0.0};
    CHECK(jensen_loss_property(LossKind::kLogloss, step, 500, 10, 3).worst_gap == 0.0);
  }
}

TEST_CASE("k-fold partition") {
  const auto folds = kfold_indices(100, 5, 3);
  REQUIRE(folds.size() == 5);
  std::vector<int> seen(100, 0);
  for (const auto& f : folds) {
    CHECK(f.size() == 20);
    for (std::size_t r : f) ++seen[r];
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(kfold_indices(100, 5, 3) == folds);
  CHECK_THROWS_AS(kfold_indices(7, 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(kfold_indices(10, 1, 1), std::invalid_argument);
}

TEST_CASE("cross-validation aggregates per fold") {
  SimConfig c;
  c.n = 50;
  const Dataset data = generate(c).data;
  std::size_t calls = 0;
  const auto summary = crossvalidate(data, 5, 1, [&](const Dataset& train, const Dataset& test) {
    ++calls;
    CHECK(train.rows() + test.rows() == 50);
    return FoldMetrics{{"constant", 0.5}, {"size", static_cast<double>(test.rows())}};
  });
  CHECK(calls == 5);
  CHECK(summary.at("constant").mean == 0.5);
  CHECK(summary.at("constant").stddev == 0.0);
  CHECK(summary.at("size").per_fold == Vec{10, 10, 10, 10, 10});
}

TEST_CASE("cross-validated NAMformer runs end to end") {
  SimConfig c;
  c.n = 120;
  c.categoricals = false;
  const Dataset data = generate(c).data;
  TrainConfig train;
  train.max_epochs = 2;
  const auto summary = crossvalidate_namformer(data, 3, train, small());
  CHECK(summary.at("mse").per_fold.size() == 3);
  CHECK(std::isfinite(summary.at("mse").mean));
}
