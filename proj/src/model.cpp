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

#include "namformer/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace namformer {
namespace {

std::string feature_prefix(std::size_t j) { return "feature." + std::to_string(j); }
std::string layer_prefix(std::size_t l) { return "layer." + std::to_string(l); }
std::string head_prefix(std::size_t i) { return "head." + std::to_string(i); }
std::string shape_name(std::size_t j) { return "shape." + std::to_string(j); }

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void add_linear(Parameters& params, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  params.add(prefix + ".weight",
             uniform_tensor(Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  params.add(prefix + ".bias", Tensor(Shape{out}, 0.0));
}

void add_norm(Parameters& params, const std::string& prefix, std::size_t width) {
  params.add(prefix + ".scale", Tensor(Shape{width}, 1.0));
  params.add(prefix + ".shift", Tensor(Shape{width}, 0.0));
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::kRegression ? "regression" : "binary_classification";
}

std::string to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "gelu";
}

Task parse_task(const std::string& text) {
  if (text == "regression") return Task::kRegression;
  if (text == "binary_classification" || text == "classification") {
    return Task::kBinaryClassification;
  }
  throw std::invalid_argument("unknown task '" + text + "'");
}

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "gelu") return Activation::kGelu;
  throw std::invalid_argument("unknown activation '" + text + "'");
}

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw std::invalid_argument("model: embedding_dim must be positive");
  if (heads == 0 || embedding_dim % heads != 0) {
    throw std::invalid_argument("model: embedding_dim " + std::to_string(embedding_dim) +
                                " is not divisible by heads " + std::to_string(heads));
  }
  if (ffn_width == 0) throw std::invalid_argument("model: ffn_width must be positive");
  for (double rate : {attention_dropout, ffn_dropout, head_dropout}) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw std::invalid_argument("model: dropout rates must lie in [0, 1)");
    }
  }
  // p = 1 masks every component: the intercept-only limit.
  if (!(feature_dropout >= 0.0 && feature_dropout <= 1.0)) {
    throw std::invalid_argument("model: feature_dropout must lie in [0, 1]");
  }
  for (std::size_t w : head_layers) {
    if (w == 0) throw std::invalid_argument("model: head layer widths must be positive");
  }
}

void Parameters::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t Parameters::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool Parameters::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const Tensor& t) { return t.all_finite(); });
}

std::vector<double> Parameters::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const Tensor& t : tensors_) flat.insert(flat.end(), t.values().begin(), t.values().end());
  return flat;
}

void Parameters::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw std::invalid_argument("Parameters::assign: expected " + std::to_string(scalar_count()) +
                                " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (Tensor& t : tensors_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data());
    offset += t.size();
  }
}

DropoutMask sample_mask(std::size_t features, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_mask: p must lie in [0, 1]");
  DropoutMask mask(features + 1);
  for (double& bit : mask) bit = rng.bernoulli(p) ? 0.0 : 1.0;
  return mask;
}

DropoutMask full_mask(std::size_t features) { return DropoutMask(features + 1, 1.0); }

double Breakdown::total() const {
  double acc = intercept;
  for (std::size_t j = 0; j < shapes.size(); ++j) acc += mask[j] * shapes[j];
  return acc + mask.back() * interaction;
}

NamFormer::NamFormer(ModelConfig config, std::vector<FeatureKind> kinds,
                     std::vector<std::size_t> widths, Rng& rng, double intercept)
    : config_(std::move(config)), kinds_(std::move(kinds)), widths_(std::move(widths)) {
  config_.validate();
  if (kinds_.size() != widths_.size()) {
    throw std::invalid_argument("NamFormer: kinds and widths differ in length");
  }
  const std::size_t e = config_.embedding_dim;
  const double embed_bound = 1.0 / std::sqrt(static_cast<double>(e));
  for (std::size_t j = 0; j < kinds_.size(); ++j) {
    if (widths_[j] == 0) throw std::invalid_argument("NamFormer: zero-width feature");
    if (kinds_[j] == FeatureKind::kNumeric) {
      add_linear(params_, feature_prefix(j), widths_[j], e, rng);
    } else {
      params_.add(feature_prefix(j) + ".table",
                  uniform_tensor(Shape{widths_[j], e}, embed_bound, rng));
    }
  }
  params_.add("cls", uniform_tensor(Shape{1, e}, embed_bound, rng));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = layer_prefix(l);
    add_norm(params_, p + ".attn_norm", e);
    add_linear(params_, p + ".attn.query", e, e, rng);
    add_linear(params_, p + ".attn.key", e, e, rng);
    add_linear(params_, p + ".attn.value", e, e, rng);
    add_linear(params_, p + ".attn.out", e, e, rng);
    add_norm(params_, p + ".ffn_norm", e);
    add_linear(params_, p + ".ffn.hidden", e, config_.ffn_width, rng);
    add_linear(params_, p + ".ffn.out", config_.ffn_width, e, rng);
  }
  add_norm(params_, "final_norm", e);
  std::size_t in = e;
  for (std::size_t i = 0; i < config_.head_layers.size(); ++i) {
    add_linear(params_, head_prefix(i), in, config_.head_layers[i], rng);
    in = config_.head_layers[i];
  }
  add_linear(params_, head_prefix(config_.head_layers.size()), in, 1, rng);
  if (config_.shape_nets) {
    for (std::size_t j = 0; j < kinds_.size(); ++j) {
      params_.add(shape_name(j), uniform_tensor(Shape{e, 1}, embed_bound, rng));
    }
  }
  params_.add("intercept", Tensor(Shape{1}, intercept));
}

namespace {
std::vector<FeatureKind> kinds_of(const EncoderState& encoders) {
  std::vector<FeatureKind> kinds;
  for (const FeatureEncoder& fe : encoders.features) kinds.push_back(fe.spec.kind);
  return kinds;
}
std::vector<std::size_t> widths_of(const EncoderState& encoders) {
  std::vector<std::size_t> widths;
  for (const FeatureEncoder& fe : encoders.features) widths.push_back(fe.width());
  return widths;
}
}  // namespace

NamFormer::NamFormer(ModelConfig config, const EncoderState& encoders, Rng& rng, double intercept)
    : NamFormer(std::move(config), kinds_of(encoders), widths_of(encoders), rng, intercept) {}

NamFormer::NamFormer(ModelConfig config, std::vector<FeatureKind> kinds,
                     std::vector<std::size_t> widths, Parameters params)
    : config_(std::move(config)), kinds_(std::move(kinds)), widths_(std::move(widths)) {
  config_.validate();
  // Build a reference layout and check the supplied parameters against it.
  Rng rng(0);
  NamFormer reference(config_, kinds_, widths_, rng);
  const Parameters& want = reference.parameters();
  if (want.size() != params.size()) {
    throw std::invalid_argument("NamFormer: expected " + std::to_string(want.size()) +
                                " parameter arrays, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!params.contains(want.name(i))) {
      throw std::invalid_argument("NamFormer: missing parameter '" + want.name(i) + "'");
    }
    const Tensor& got = params.at(want.name(i));
    if (got.shape() != want[i].shape()) {
      throw std::invalid_argument("NamFormer: parameter '" + want.name(i) + "' has shape " +
                                  shape_string(got.shape()) + ", expected " +
                                  shape_string(want[i].shape()));
    }
    params_.add(want.name(i), got);
  }
}

Var NamFormer::param(const std::vector<Var>& p, const std::string& name) const {
  return p[params_.index_of(name)];
}

Var NamFormer::linear(const std::vector<Var>& p, const std::string& prefix, Var x) const {
  return add(matmul(x, param(p, prefix + ".weight")), param(p, prefix + ".bias"));
}

Var NamFormer::affine_norm(const std::vector<Var>& p, const std::string& prefix, Var x) const {
  return add(multiply(layer_norm(x), param(p, prefix + ".scale")), param(p, prefix + ".shift"));
}

Var NamFormer::activate(Var x) const {
  return config_.activation == Activation::kRelu ? relu(x) : gelu(x);
}

Var NamFormer::maybe_dropout(Var x, double rate, const ForwardOptions& options) const {
  if (!options.training || rate <= 0.0) return x;
  if (options.rng == nullptr) throw std::invalid_argument("forward: training requires an rng");
  std::vector<double> keep(x.value().size());
  for (double& k : keep) k = options.rng->bernoulli(rate) ? 0.0 : 1.0;
  return dropout(x, rate, std::move(keep));
}

Var NamFormer::embed_feature(Tape& tape, const std::vector<Var>& p, std::size_t j,
                             const EncodedData& batch) const {
  const std::size_t n = batch.rows();
  if (kinds_[j] == FeatureKind::kNumeric) {
    const Tensor& z = batch.numeric.at(j);
    if (z.rank() != 3 || z.extent(0) != n || z.extent(1) != 1 || z.extent(2) != widths_[j]) {
      throw std::invalid_argument("embed: feature " + std::to_string(j) + " encoded as " +
                                  shape_string(z.shape()) + ", model expects width " +
                                  std::to_string(widths_[j]));
    }
    return linear(p, feature_prefix(j), tape.constant(z));
  }
  const std::vector<std::size_t>& idx = batch.categorical.at(j);
  if (idx.size() != n) {
    throw std::invalid_argument("embed: feature " + std::to_string(j) + " has " +
                                std::to_string(idx.size()) + " indices for " + std::to_string(n) +
                                " rows");
  }
  return embedding(param(p, feature_prefix(j) + ".table"), idx, Shape{n, 1});
}

Var NamFormer::transformer_block(Tape& tape, const std::vector<Var>& p, std::size_t layer, Var x,
                                 const ForwardOptions& options) const {
  (void)tape;
  const std::string prefix = layer_prefix(layer);
  const std::size_t e = config_.embedding_dim;
  const std::size_t dh = e / config_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Var a = affine_norm(p, prefix + ".attn_norm", x);
  Var q = linear(p, prefix + ".attn.query", a);
  Var k = linear(p, prefix + ".attn.key", a);
  Var v = linear(p, prefix + ".attn.value", a);
  std::vector<Var> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    Var qh = config_.heads == 1 ? q : slice(q, 2, h * dh, (h + 1) * dh);
    Var kh = config_.heads == 1 ? k : slice(k, 2, h * dh, (h + 1) * dh);
    Var vh = config_.heads == 1 ? v : slice(v, 2, h * dh, (h + 1) * dh);
    Var weights = softmax(scale(matmul(qh, kh, /*transpose_b=*/true), inv_sqrt_dh));
    weights = maybe_dropout(weights, config_.attention_dropout, options);
    heads.push_back(matmul(weights, vh));
  }
  Var attended = heads.size() == 1 ? heads[0] : concat(heads, 2);
  x = add(x, linear(p, prefix + ".attn.out", attended));

  Var f = affine_norm(p, prefix + ".ffn_norm", x);
  Var hidden = activate(linear(p, prefix + ".ffn.hidden", f));
  hidden = maybe_dropout(hidden, config_.ffn_dropout, options);
  return add(x, linear(p, prefix + ".ffn.out", hidden));
}

ForwardGraph NamFormer::forward(Tape& tape, const EncodedData& batch,
                                const ForwardOptions& options, bool trainable) const {
  const std::size_t n = batch.rows();
  const std::size_t features = feature_count();
  if (n == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.numeric.size() != features || batch.categorical.size() != features) {
    throw std::invalid_argument("forward: batch has the wrong number of feature slots");
  }
  if (!options.masks.empty() && options.masks.size() != n * (features + 1)) {
    throw std::invalid_argument("forward: mask length " + std::to_string(options.masks.size()) +
                                " does not match batch " + std::to_string(n) + " x (J + 1) = " +
                                std::to_string(n * (features + 1)));
  }

  ForwardGraph g;
  g.params.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    g.params.push_back(trainable ? tape.leaf(params_[i]) : tape.constant(params_[i]));
  }
  const std::vector<Var>& p = g.params;

  std::vector<Var> tokens;
  tokens.reserve(features + 1);
  tokens.push_back(embedding(param(p, "cls"), std::vector<std::size_t>(n, 0), Shape{n, 1}));
  for (std::size_t j = 0; j < features; ++j) {
    g.embeddings.push_back(embed_feature(tape, p, j, batch));
    tokens.push_back(g.embeddings.back());
  }

  // No positional information: the stack is permutation-equivariant in the feature tokens.
  Var x = tokens.size() == 1 ? tokens[0] : concat(tokens, 1);
  for (std::size_t l = 0; l < config_.layers; ++l) x = transformer_block(tape, p, l, x, options);
  g.contextualized = affine_norm(p, "final_norm", x);

  Var h = slice(g.contextualized, 1, 0, 1);
  for (std::size_t i = 0; i < config_.head_layers.size(); ++i) {
    h = activate(linear(p, head_prefix(i), h));
    h = maybe_dropout(h, config_.head_dropout, options);
  }
  g.interaction = linear(p, head_prefix(config_.head_layers.size()), h);

  auto mask_column = [&](std::size_t slot) {
    std::vector<double> col(n);
    for (std::size_t r = 0; r < n; ++r) col[r] = options.masks[r * (features + 1) + slot];
    return tape.constant(Tensor(Shape{n, 1, 1}, std::move(col)));
  };
  const bool masked = !options.masks.empty();

  // eta = ((beta_0 + w_1 f_1) + ... + w_J f_J) + w_G G, in this order.
  Var eta = param(p, "intercept");
  bool started = false;
  auto accumulate = [&](Var term) {
    eta = started ? add(eta, term) : add(term, eta);
    started = true;
  };
  if (config_.shape_nets) {
    for (std::size_t j = 0; j < features; ++j) {
      g.shapes.push_back(matmul(g.embeddings[j], param(p, shape_name(j))));
      accumulate(masked ? multiply(g.shapes.back(), mask_column(j)) : g.shapes.back());
    }
  }
  accumulate(masked ? multiply(g.interaction, mask_column(features)) : g.interaction);
  g.eta = eta;
  return g;
}

std::vector<Breakdown> NamFormer::predict(const EncodedData& data, std::span<const double> masks,
                                          std::size_t batch_size) const {
  const std::size_t n = data.rows();
  const std::size_t features = feature_count();
  if (!masks.empty() && masks.size() != n * (features + 1)) {
    throw std::invalid_argument("predict: mask length " + std::to_string(masks.size()) +
                                " does not match " + std::to_string(n) + " rows x (J + 1)");
  }
  for (double w : masks) {
    if (w != 0.0 && w != 1.0) throw std::invalid_argument("predict: mask entries must be 0 or 1");
  }
  std::vector<Breakdown> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    std::vector<std::size_t> rows(stop - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const EncodedData batch = data.gather(rows);
    ForwardOptions options;
    if (!masks.empty()) {
      options.masks = masks.subspan(start * (features + 1), rows.size() * (features + 1));
    }
    Tape tape;
    const ForwardGraph g = forward(tape, batch, options, /*trainable=*/false);
    const double intercept = params_.at("intercept")[0];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Breakdown b;
      b.intercept = intercept;
      for (const Var& s : g.shapes) b.shapes.push_back(s.value()[i]);
      if (!config_.shape_nets) b.shapes.assign(features, 0.0);
      b.interaction = g.interaction.value()[i];
      if (options.masks.empty()) {
        b.mask = full_mask(features);
      } else {
        b.mask.assign(options.masks.begin() + static_cast<std::ptrdiff_t>(i * (features + 1)),
                      options.masks.begin() + static_cast<std::ptrdiff_t>((i + 1) * (features + 1)));
      }
      b.eta = g.eta.value()[i];
      out.push_back(std::move(b));
    }
  }
  return out;
}

std::vector<double> NamFormer::predict_eta(const EncodedData& data, std::size_t batch_size) const {
  std::vector<double> eta;
  eta.reserve(data.rows());
  for (const Breakdown& b : predict(data, {}, batch_size)) eta.push_back(b.eta);
  return eta;
}

namespace {
std::vector<Tensor> collect_tokens(const NamFormer& model, const EncodedData& data,
                                   std::size_t batch_size, bool contextual) {
  const std::size_t n = data.rows();
  const std::size_t e = model.config().embedding_dim;
  const std::size_t features = model.feature_count();
  std::vector<Tensor> out(features, Tensor(Shape{n, e}));
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    std::vector<std::size_t> rows(stop - start);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start + i;
    const EncodedData batch = data.gather(rows);
    Tape tape;
    const ForwardGraph g = model.forward(tape, batch, ForwardOptions{}, false);
    for (std::size_t j = 0; j < features; ++j) {
      if (contextual) {
        const Tensor& xi = g.contextualized.value();  // [B, J + 1, e]
        for (std::size_t i = 0; i < rows.size(); ++i) {
          std::copy_n(xi.data() + (i * (features + 1) + j + 1) * e, e,
                      out[j].data() + (start + i) * e);
        }
      } else {
        const Tensor& eps = g.embeddings[j].value();  // [B, 1, e]
        std::copy_n(eps.data(), rows.size() * e, out[j].data() + start * e);
      }
    }
  }
  return out;
}
}  // namespace

std::vector<Tensor> NamFormer::embed(const EncodedData& data, std::size_t batch_size) const {
  return collect_tokens(*this, data, batch_size, false);
}

std::vector<Tensor> NamFormer::contextualize(const EncodedData& data,
                                             std::size_t batch_size) const {
  return collect_tokens(*this, data, batch_size, true);
}

std::vector<double> NamFormer::shape_output(std::size_t feature, const Tensor& encoded) const {
  if (!config_.shape_nets) return std::vector<double>(encoded.extent(0), 0.0);
  if (kinds_.at(feature) != FeatureKind::kNumeric) {
    throw std::invalid_argument("shape_output: feature " + std::to_string(feature) +
                                " is categorical");
  }
  Tape tape;
  EncodedData batch;
  batch.numeric.resize(feature_count());
  batch.categorical.resize(feature_count());
  batch.numeric[feature] = encoded;
  batch.target.assign(encoded.extent(0), 0.0);
  std::vector<Var> p;
  for (std::size_t i = 0; i < params_.size(); ++i) p.push_back(tape.constant(params_[i]));
  Var f = matmul(embed_feature(tape, p, feature, batch), param(p, shape_name(feature)));
  const auto v = f.value().values();
  return {v.begin(), v.end()};
}

std::vector<double> NamFormer::shape_output(std::size_t feature,
                                            std::span<const std::size_t> indices) const {
  if (!config_.shape_nets) return std::vector<double>(indices.size(), 0.0);
  if (kinds_.at(feature) != FeatureKind::kCategorical) {
    throw std::invalid_argument("shape_output: feature " + std::to_string(feature) +
                                " is numeric");
  }
  Tape tape;
  EncodedData batch;
  batch.numeric.resize(feature_count());
  batch.categorical.resize(feature_count());
  batch.categorical[feature].assign(indices.begin(), indices.end());
  batch.target.assign(indices.size(), 0.0);
  std::vector<Var> p;
  for (std::size_t i = 0; i < params_.size(); ++i) p.push_back(tape.constant(params_[i]));
  Var f = matmul(embed_feature(tape, p, feature, batch), param(p, shape_name(feature)));
  const auto v = f.value().values();
  return {v.begin(), v.end()};
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  if (points == 0) return {};
  if (points == 1) return {lo};
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

ShapeCurve extract_shape_function(const NamFormer& model, const EncoderState& encoders,
                                  std::size_t feature, std::span<const double> grid) {
  const FeatureEncoder& fe = encoders.features.at(feature);
  if (!fe.numeric()) {
    throw std::invalid_argument("extract_shape_function: feature '" + fe.spec.name +
                                "' is categorical");
  }
  const NumericEncoder& enc = fe.as_numeric();
  const std::size_t width = enc.width();
  Tensor z(Shape{grid.size(), 1, width});
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::vector<double> code = enc.encode(grid[i]);
    std::copy(code.begin(), code.end(), z.data() + i * width);
  }
  ShapeCurve curve;
  curve.x.assign(grid.begin(), grid.end());
  curve.raw = model.shape_output(feature, z);
  double m = 0.0;
  for (double v : curve.raw) m += v;
  if (!curve.raw.empty()) m /= static_cast<double>(curve.raw.size());
  curve.centered.reserve(curve.raw.size());
  for (double v : curve.raw) curve.centered.push_back(v - m);
  return curve;
}

std::vector<double> categorical_shape(const NamFormer& model, std::size_t feature) {
  std::vector<std::size_t> indices(model.widths().at(feature));
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return model.shape_output(feature, indices);
}

}  // namespace namformer
