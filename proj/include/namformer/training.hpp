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
#include "namformer/encoding.hpp"
#include "namformer/model.hpp"
#include "namformer/tape.hpp"

namespace namformer {

enum class LossKind { kMse, kLogloss };

std::string to_string(LossKind loss);
LossKind parse_loss(const std::string& text);
LossKind default_loss(Task task);

// Mean squared residual.
double loss_mse(std::span<const double> eta, std::span<const double> y);
// Mean log(1 + exp(-m)) with margin m = (2y - 1) * eta; labels must be 0 or 1.
double loss_logloss(std::span<const double> eta, std::span<const double> y);
double evaluate_loss(LossKind kind, std::span<const double> eta, std::span<const double> y);

// The same losses recorded on a tape; `eta` holds one value per target.
Var mse_loss(Var eta, std::span<const double> y);
Var logloss(Var eta, std::span<const double> y);
Var loss_node(LossKind kind, Var eta, std::span<const double> y);

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 15;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_patience = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.3;
  LossKind loss = LossKind::kMse;
  double grad_clip_norm = 1.0;  // 0 disables clipping

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const Parameters& params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  void step(Parameters& params, const std::vector<Tensor>& grads, double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Loss and parameter gradients of one batch. Masks as in ForwardOptions.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;  // parallel to model parameters
};
BatchGradient batch_gradient(const NamFormer& model, const EncodedData& batch, LossKind loss,
                             std::span<const double> masks, bool training, Rng* rng);

struct GradientCheck {
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};
// Compares batch_gradient (dropout off, fixed masks) with central finite
// differences over every parameter scalar.
GradientCheck model_gradient_check(const NamFormer& model, const EncodedData& batch, LossKind loss,
                                   std::span<const double> masks, double h = 1e-5);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// Seeded shuffle split; returns (train rows, validation rows).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n,
                                                                         double validation_fraction,
                                                                         std::uint64_t seed);

// Intercept initialisation: target mean, or log-odds of the positive rate.
double initial_intercept(Task task, std::span<const double> y);

struct TrainResult {
  NamFormer model;
  TrainHistory history;
};

// Trains on pre-encoded splits with shape-function dropout, returning the
// parameters with the lowest validation loss.
TrainResult train_encoded(const EncodedData& train, const EncodedData& validation,
                          const EncoderState& encoders, const TrainConfig& config,
                          const ModelConfig& model_config);

// The train/validation partition train() uses for `config`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_validation_rows(
    std::size_t n, const TrainConfig& config);

// Splits `data` into train/validation by a seeded shuffle, encodes with the
// fitted `encoders`, and trains.
TrainResult train(const Dataset& data, const EncoderState& encoders, const TrainConfig& config,
                  const ModelConfig& model_config);

}  // namespace namformer
