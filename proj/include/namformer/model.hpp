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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "namformer/encoding.hpp"
#include "namformer/random.hpp"
#include "namformer/tape.hpp"
#include "namformer/tensor.hpp"

namespace namformer {

enum class Task { kRegression, kBinaryClassification };
enum class Activation { kRelu, kGelu };

std::string to_string(Task task);
std::string to_string(Activation activation);
Task parse_task(const std::string& text);
Activation parse_activation(const std::string& text);

struct ModelConfig {
  std::size_t embedding_dim = 32;
  std::size_t layers = 4;
  std::size_t heads = 2;
  std::size_t ffn_width = 64;
  double attention_dropout = 0.3;
  double ffn_dropout = 0.3;
  double head_dropout = 0.3;
  std::vector<std::size_t> head_layers = {64, 32};  // hidden widths; a final width-1 layer follows
  Activation activation = Activation::kGelu;
  double feature_dropout = 0.1;
  Task task = Task::kRegression;
  bool shape_nets = true;  // false gives the head-only (FT-Transformer style) ablation

  void validate() const;
};

// Named trainable arrays in a fixed order.
class Parameters {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const { return tensors_[index_of(name)]; }
  Tensor& at(const std::string& name) { return tensors_[index_of(name)]; }

  // Total scalar count.
  std::size_t scalar_count() const;
  bool all_finite() const;

  // Flat views used by optimizers and gradient checks.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// Binary keep mask over the J shape outputs followed by the interaction head.
using DropoutMask = std::vector<double>;

DropoutMask sample_mask(std::size_t features, double p, Rng& rng);
DropoutMask full_mask(std::size_t features);

// Additive decomposition of one prediction.
struct Breakdown {
  double intercept = 0.0;
  std::vector<double> shapes;  // f_j before masking
  double interaction = 0.0;    // G before masking
  DropoutMask mask;            // J + 1 entries
  double eta = 0.0;            // value computed by the network

  // Same summation order as the network: intercept, shapes in order, then G.
  double total() const;
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;                 // required when training with dropout
  std::span<const double> masks;      // [batch * (J + 1)]; empty means keep everything
};

class NamFormer;

// Tape nodes produced by one batched forward pass.
struct ForwardGraph {
  std::vector<Var> params;          // parallel to NamFormer::parameters()
  std::vector<Var> embeddings;      // epsilon_j, [B, 1, e]
  Var contextualized;               // Xi, [B, J + 1, e]; token 0 is CLS
  std::vector<Var> shapes;          // f_j, [B, 1, 1]; empty without shape nets
  Var interaction;                  // G, [B, 1, 1]
  Var eta;                          // [B, 1, 1]
};

class NamFormer {
 public:
  // widths[j] is T_j for numeric features and the vocabulary size for categorical ones.
  NamFormer(ModelConfig config, std::vector<FeatureKind> kinds, std::vector<std::size_t> widths,
            Rng& rng, double intercept = 0.0);
  NamFormer(ModelConfig config, const EncoderState& encoders, Rng& rng, double intercept = 0.0);
  // Rebuilds a model around existing parameters (persistence).
  NamFormer(ModelConfig config, std::vector<FeatureKind> kinds, std::vector<std::size_t> widths,
            Parameters params);

  const ModelConfig& config() const { return config_; }
  std::size_t feature_count() const { return kinds_.size(); }
  const std::vector<FeatureKind>& kinds() const { return kinds_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  const Parameters& parameters() const { return params_; }
  Parameters& parameters() { return params_; }

  // Builds the forward pass on `tape`. With `trainable` the parameters enter
  // as leaves so gradients can be taken; otherwise as constants.
  ForwardGraph forward(Tape& tape, const EncodedData& batch, const ForwardOptions& options,
                       bool trainable) const;

  // Inference with dropout disabled. `masks` as in ForwardOptions.
  std::vector<Breakdown> predict(const EncodedData& data, std::span<const double> masks = {},
                                 std::size_t batch_size = 512) const;
  std::vector<double> predict_eta(const EncodedData& data, std::size_t batch_size = 512) const;

  // Uncontextualized embeddings epsilon_j, as an [n, e] tensor per feature.
  std::vector<Tensor> embed(const EncodedData& data, std::size_t batch_size = 512) const;
  // Contextualized embeddings Xi_j (token j + 1) as an [n, e] tensor per feature.
  std::vector<Tensor> contextualize(const EncodedData& data, std::size_t batch_size = 512) const;

  // f_j evaluated on pre-encoded inputs: rows of [n, 1, T_j] for numeric
  // features, vocabulary indices for categorical ones.
  std::vector<double> shape_output(std::size_t feature, const Tensor& encoded) const;
  std::vector<double> shape_output(std::size_t feature, std::span<const std::size_t> indices) const;

 private:
  Var embed_feature(Tape& tape, const std::vector<Var>& p, std::size_t j,
                    const EncodedData& batch) const;
  Var transformer_block(Tape& tape, const std::vector<Var>& p, std::size_t layer, Var x,
                        const ForwardOptions& options) const;
  Var affine_norm(const std::vector<Var>& p, const std::string& prefix, Var x) const;
  Var linear(const std::vector<Var>& p, const std::string& prefix, Var x) const;
  Var activate(Var x) const;
  Var maybe_dropout(Var x, double rate, const ForwardOptions& options) const;
  Var param(const std::vector<Var>& p, const std::string& name) const;

  ModelConfig config_;
  std::vector<FeatureKind> kinds_;
  std::vector<std::size_t> widths_;
  Parameters params_;
};

struct ShapeCurve {
  std::vector<double> x;
  std::vector<double> raw;       // f_j(E_j(encode(x)))
  std::vector<double> centered;  // raw minus its mean over the grid
};

ShapeCurve extract_shape_function(const NamFormer& model, const EncoderState& encoders,
                                  std::size_t feature, std::span<const double> grid);

// Per-level shape outputs of a categorical feature, in vocabulary order
// (index 0 is the unknown level).
std::vector<double> categorical_shape(const NamFormer& model, std::size_t feature);

std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

}  // namespace namformer
