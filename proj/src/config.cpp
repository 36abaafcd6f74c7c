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

#include "namformer/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace namformer {
namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw std::invalid_argument("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: key '" + qualified(key) + "' has the wrong type");
    }
  }

  template <typename T, typename Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string text;
    const bool present = node_.contains(key);
    read(key, text);
    if (!present) return;
    try {
      out = parse(text);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config: key '" + qualified(key) + "': " + e.what());
    }
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  std::optional<Section> child(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return std::nullopt;
    return Section(*it, qualified(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  // Call after every known key has been read.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw std::invalid_argument("config: unknown key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_simulation(Section s, SimConfig& c) {
  s.read("n", c.n);
  s.read("numeric_features", c.numeric_features);
  s.read("categoricals", c.categoricals);
  s.read("noise_std", c.noise_std);
  s.read("interaction", c.interaction);
  s.read("seed", c.seed);
  s.finish();
}

void read_model(Section s, ModelConfig& c) {
  s.read("embedding_dim", c.embedding_dim);
  s.read("layers", c.layers);
  s.read("heads", c.heads);
  s.read("ffn_width", c.ffn_width);
  s.read("attention_dropout", c.attention_dropout);
  s.read("ffn_dropout", c.ffn_dropout);
  s.read("head_dropout", c.head_dropout);
  s.read("head_layers", c.head_layers);
  s.read_enum("activation", c.activation, parse_activation);
  s.read("feature_dropout", c.feature_dropout);
  s.read_enum("task", c.task, parse_task);
  s.read("shape_nets", c.shape_nets);
  s.finish();
}

void read_training(Section s, TrainConfig& c, bool& loss_set) {
  s.read("learning_rate", c.learning_rate);
  s.read("weight_decay", c.weight_decay);
  s.read("batch_size", c.batch_size);
  s.read("max_epochs", c.max_epochs);
  s.read("early_stop_patience", c.early_stop_patience);
  s.read("lr_decay_factor", c.lr_decay_factor);
  s.read("lr_decay_patience", c.lr_decay_patience);
  s.read("seed", c.seed);
  s.read("validation_fraction", c.validation_fraction);
  loss_set = s.has("loss");
  s.read_enum("loss", c.loss, parse_loss);
  s.read("grad_clip_norm", c.grad_clip_norm);
  s.finish();
}

void read_encoding(Section s, BinCounts& b) {
  s.read("thermometer_bins", b.thermometer);
  s.read("ple_bins", b.ple);
  s.finish();
}

FeatureSpec read_feature(Section s) {
  FeatureSpec spec;
  s.read("name", spec.name);
  s.read_enum("kind", spec.kind, parse_feature_kind);
  if (s.has("encoding")) {
    NumericEncoding enc = NumericEncoding::kPle;
    s.read_enum("encoding", enc, parse_numeric_encoding);
    spec.encoding = enc;
  } else if (spec.kind == FeatureKind::kNumeric) {
    spec.encoding = NumericEncoding::kPle;
  }
  s.finish();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  return spec;
}

}  // namespace

std::vector<FeatureSpec> RunConfig::feature_specs() const {
  if (!features.empty()) return features;
  std::vector<FeatureSpec> specs;
  for (std::size_t j = 1; j <= simulation.numeric_features; ++j) {
    specs.push_back(FeatureSpec{"x" + std::to_string(j), FeatureKind::kNumeric, NumericEncoding::kPle});
  }
  if (simulation.categoricals) {
    for (std::size_t f = 1; f <= kCategoricalFeatureCount; ++f) {
      specs.push_back(FeatureSpec{"cat" + std::to_string(f), FeatureKind::kCategorical, std::nullopt});
    }
  }
  return specs;
}

void RunConfig::set_seed(std::uint64_t seed) {
  simulation.seed = seed;
  training.seed = seed;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  Section root(doc, "");
  if (!doc.contains("schema_version")) throw std::invalid_argument("config: missing key 'schema_version'");
  int version = 0;
  root.read("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw std::invalid_argument("config: key 'schema_version': unsupported version " +
                                std::to_string(version));
  }

  RunConfig config;
  if (auto s = root.child("simulation")) read_simulation(*s, config.simulation);
  if (auto s = root.child("model")) read_model(*s, config.model);
  if (auto s = root.child("training")) read_training(*s, config.training, config.loss_set);
  if (auto s = root.child("encoding")) read_encoding(*s, config.bins);
  if (doc.contains("features")) {
    const json& list = root.raw("features");
    if (!list.is_array()) throw std::invalid_argument("config: key 'features' must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      config.features.push_back(read_feature(Section(list[i], "features[" + std::to_string(i) + "]")));
    }
  }
  root.read("target", config.target);
  if (auto s = root.child("output")) {
    s->read("history", config.output.history);
    s->finish();
  }
  root.finish();

  if (!config.loss_set) config.training.loss = default_loss(config.model.task);
  try {
    config.simulation.validate();
    config.model.validate();
    config.training.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

}  // namespace namformer
