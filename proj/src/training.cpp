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

#include "namformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "namformer/random.hpp"

namespace namformer {

std::string to_string(LossKind loss) { return loss == LossKind::kMse ? "mse" : "logloss"; }

LossKind parse_loss(const std::string& text) {
  if (text == "mse") return LossKind::kMse;
  if (text == "logloss") return LossKind::kLogloss;
  throw std::invalid_argument("unknown loss '" + text + "'");
}

LossKind default_loss(Task task) {
  return task == Task::kRegression ? LossKind::kMse : LossKind::kLogloss;
}

namespace {
void check_pair(std::span<const double> eta, std::span<const double> y, const char* who) {
  if (eta.size() != y.size()) throw std::invalid_argument(std::string(who) + ": length mismatch");
  if (y.empty()) throw std::invalid_argument(std::string(who) + ": empty batch");
}

void check_binary(std::span<const double> y, const char* who) {
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
  }
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
}  // namespace

double loss_mse(std::span<const double> eta, std::span<const double> y) {
  check_pair(eta, y, "loss_mse");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += (eta[i] - y[i]) * (eta[i] - y[i]);
  return total / static_cast<double>(y.size());
}

double loss_logloss(std::span<const double> eta, std::span<const double> y) {
  check_pair(eta, y, "loss_logloss");
  check_binary(y, "loss_logloss");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += softplus_value(-(2.0 * y[i] - 1.0) * eta[i]);
  return total / static_cast<double>(y.size());
}

double evaluate_loss(LossKind kind, std::span<const double> eta, std::span<const double> y) {
  return kind == LossKind::kMse ? loss_mse(eta, y) : loss_logloss(eta, y);
}

Var mse_loss(Var eta, std::span<const double> y) {
  if (eta.value().size() != y.size()) throw std::invalid_argument("mse_loss: length mismatch");
  if (y.empty()) throw std::invalid_argument("mse_loss: empty batch");
  std::vector<double> neg(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) neg[i] = -y[i];
  Var residual = add(eta, eta.tape->constant(Tensor(eta.shape(), std::move(neg))));
  return mean(multiply(residual, residual));
}

Var logloss(Var eta, std::span<const double> y) {
  if (eta.value().size() != y.size()) throw std::invalid_argument("logloss: length mismatch");
  if (y.empty()) throw std::invalid_argument("logloss: empty batch");
  check_binary(y, "logloss");
  std::vector<double> sign(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) sign[i] = -(2.0 * y[i] - 1.0);
  Var neg_margin = multiply(eta, eta.tape->constant(Tensor(eta.shape(), std::move(sign))));
  return mean(softplus(neg_margin));
}

Var loss_node(LossKind kind, Var eta, std::span<const double> y) {
  return kind == LossKind::kMse ? mse_loss(eta, y) : logloss(eta, y);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("training: learning_rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("training: weight_decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("training: batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("training: max_epochs must be positive");
  if (early_stop_patience == 0 || lr_decay_patience == 0) {
    throw std::invalid_argument("training: patience values must be positive");
  }
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw std::invalid_argument("training: lr_decay_factor must lie in (0, 1]");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("training: validation_fraction must lie in (0, 1)");
  }
  if (grad_clip_norm < 0.0) throw std::invalid_argument("training: grad_clip_norm must be >= 0");
}

AdamW::AdamW(const Parameters& params, double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].size(), 0.0);
    v_.emplace_back(params[i].size(), 0.0);
  }
}

void AdamW::step(Parameters& params, const std::vector<Tensor>& grads, double learning_rate) {
  if (grads.size() != params.size()) throw std::invalid_argument("AdamW::step: gradient count mismatch");
  ++t_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* w = params[i].data();
    const double* g = grads[i].data();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= learning_rate * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * w[k]);
    }
  }
}

BatchGradient batch_gradient(const NamFormer& model, const EncodedData& batch, LossKind loss,
                             std::span<const double> masks, bool training, Rng* rng) {
  Tape tape;
  ForwardOptions options;
  options.training = training;
  options.rng = rng;
  options.masks = masks;
  const ForwardGraph g = model.forward(tape, batch, options, /*trainable=*/true);
  const Var l = loss_node(loss, g.eta, batch.target);
  const Gradients grads = tape.backward(l);
  BatchGradient out;
  out.loss = l.value().item();
  out.grads.reserve(g.params.size());
  for (const Var& p : g.params) {
    out.grads.push_back(grads.has(p) ? grads.of(p) : Tensor(p.shape(), 0.0));
  }
  return out;
}

GradientCheck model_gradient_check(const NamFormer& model, const EncodedData& batch, LossKind loss,
                                   std::span<const double> masks, double h) {
  const BatchGradient analytic = batch_gradient(model, batch, loss, masks, false, nullptr);
  std::vector<double> flat_grad;
  for (const Tensor& g : analytic.grads) {
    flat_grad.insert(flat_grad.end(), g.values().begin(), g.values().end());
  }

  NamFormer probe = model;
  const std::vector<double> x0 = model.parameters().flatten();
  auto f = [&](std::span<const double> x) {
    probe.parameters().assign(x);
    return batch_gradient(probe, batch, loss, masks, false, nullptr).loss;
  };
  const std::vector<double> numeric = finite_difference_gradient(f, x0, h);
  return GradientCheck{x0.size(), max_relative_error(flat_grad, numeric)};
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.values()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.values()) v *= factor;
    }
  }
  return norm;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n,
                                                                         double validation_fraction,
                                                                         std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {std::move(tr), std::move(val)};
}

double initial_intercept(Task task, std::span<const double> y) {
  if (y.empty()) return 0.0;
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  if (task == Task::kRegression) return m;
  const double p = std::clamp(m, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

namespace {
// Independent streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kShuffleStream = 0xbf58476d1ce4e5b9ULL;
constexpr std::uint64_t kSplitStream = 0x94d049bb133111ebULL;
}  // namespace

TrainResult train_encoded(const EncodedData& train_data, const EncodedData& validation,
                          const EncoderState& encoders, const TrainConfig& config,
                          const ModelConfig& model_config) {
  config.validate();
  model_config.validate();
  if (train_data.rows() == 0 || validation.rows() == 0) {
    throw std::invalid_argument("train: empty train or validation split");
  }
  if (config.loss == LossKind::kLogloss) {
    check_binary(train_data.target, "train");
    check_binary(validation.target, "train");
  }

  Rng init_rng(config.seed ^ kInitStream);
  NamFormer model(model_config, encoders, init_rng,
                  initial_intercept(model_config.task, train_data.target));
  AdamW optimizer(model.parameters(), config.weight_decay);
  Rng rng(config.seed ^ kShuffleStream);

  const std::size_t n = train_data.rows();
  const std::size_t features = model.feature_count();
  const double p = model_config.feature_dropout;

  TrainHistory history;
  Parameters best = model.parameters();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t since_decay = 0;
  double lr = config.learning_rate;
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double weighted = 0.0;
    for (std::size_t s = 0; s < n; s += config.batch_size) {
      const std::size_t stop = std::min(n, s + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + s, stop - s);
      const EncodedData batch = train_data.gather(rows);
      std::vector<double> masks;
      masks.reserve(rows.size() * (features + 1));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const DropoutMask w = sample_mask(features, p, rng);
        masks.insert(masks.end(), w.begin(), w.end());
      }
      BatchGradient bg = batch_gradient(model, batch, config.loss, masks, /*training=*/true, &rng);
      if (!std::isfinite(bg.loss)) {
        throw std::runtime_error("training diverged: non-finite loss in epoch " +
                                 std::to_string(epoch));
      }
      clip_global_norm(bg.grads, config.grad_clip_norm);
      optimizer.step(model.parameters(), bg.grads, lr);
      weighted += bg.loss * static_cast<double>(rows.size());
    }

    const double val_loss = evaluate_loss(config.loss, model.predict_eta(validation),
                                          validation.target);
    if (!std::isfinite(val_loss)) {
      throw std::runtime_error("training diverged: non-finite validation loss in epoch " +
                               std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weighted / static_cast<double>(n);
    rec.validation_loss = val_loss;
    rec.learning_rate = lr;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);

    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = model.parameters();
      history.best_epoch = epoch;
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      ++since_decay;
    }
    if (since_best >= config.early_stop_patience) break;
    if (since_decay >= config.lr_decay_patience) {
      lr *= config.lr_decay_factor;
      since_decay = 0;
    }
  }

  history.best_validation_loss = best_loss;
  model.parameters() = std::move(best);
  return TrainResult{std::move(model), std::move(history)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_validation_rows(
    std::size_t n, const TrainConfig& config) {
  return split_rows(n, config.validation_fraction, config.seed ^ kSplitStream);
}

TrainResult train(const Dataset& data, const EncoderState& encoders, const TrainConfig& config,
                  const ModelConfig& model_config) {
  config.validate();
  const auto [tr, val] = train_validation_rows(data.rows(), config);
  if (tr.empty() || val.empty()) {
    throw std::invalid_argument("train: dataset too small for the validation split");
  }
  const EncodedData all = encode_dataset(encoders, data);
  return train_encoded(all.gather(tr), all.gather(val), encoders, config, model_config);
}

}  // namespace namformer
