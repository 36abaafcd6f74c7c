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

#include "namformer/artifact.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace namformer {
namespace {

using nlohmann::json;

json model_config_json(const ModelConfig& c) {
  return json{{"embedding_dim", c.embedding_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn_width", c.ffn_width},
              {"attention_dropout", c.attention_dropout},
              {"ffn_dropout", c.ffn_dropout},
              {"head_dropout", c.head_dropout},
              {"head_layers", c.head_layers},
              {"activation", to_string(c.activation)},
              {"feature_dropout", c.feature_dropout},
              {"task", to_string(c.task)},
              {"shape_nets", c.shape_nets}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  c.ffn_dropout = j.at("ffn_dropout").get<double>();
  c.head_dropout = j.at("head_dropout").get<double>();
  c.head_layers = j.at("head_layers").get<std::vector<std::size_t>>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.feature_dropout = j.at("feature_dropout").get<double>();
  c.task = parse_task(j.at("task").get<std::string>());
  c.shape_nets = j.at("shape_nets").get<bool>();
  c.validate();
  return c;
}

json encoder_json(const FeatureEncoder& f) {
  json j{{"name", f.spec.name}, {"kind", to_string(f.spec.kind)}};
  if (f.numeric()) {
    const NumericEncoder& n = f.as_numeric();
    j["encoding"] = to_string(n.kind);
    j["boundaries"] = n.boundaries;
    j["mean"] = n.mean;
    j["std"] = n.std;
    j["degenerate"] = n.degenerate;
  } else {
    j["levels"] = f.as_categorical().levels;
  }
  return j;
}

FeatureEncoder encoder_from(const json& j) {
  FeatureEncoder f;
  f.spec.name = j.at("name").get<std::string>();
  f.spec.kind = parse_feature_kind(j.at("kind").get<std::string>());
  if (f.spec.kind == FeatureKind::kNumeric) {
    NumericEncoder n;
    n.kind = parse_numeric_encoding(j.at("encoding").get<std::string>());
    n.boundaries = j.at("boundaries").get<std::vector<double>>();
    n.mean = j.at("mean").get<double>();
    n.std = j.at("std").get<double>();
    n.degenerate = j.at("degenerate").get<bool>();
    f.spec.encoding = n.kind;
    f.state = std::move(n);
  } else {
    f.state = CategoricalEncoder{j.at("levels").get<std::vector<std::string>>()};
  }
  f.spec.validate();
  return f;
}

json payload_json(const ModelArtifact& a) {
  json encoders = json::array();
  for (const FeatureEncoder& f : a.encoders.features) encoders.push_back(encoder_json(f));
  json ranges = json::array();
  for (const auto& r : a.ranges) {
    ranges.push_back(r ? json::array({r->first, r->second}) : json(nullptr));
  }
  json params = json::array();
  for (std::size_t i = 0; i < a.parameters.size(); ++i) {
    const Tensor& t = a.parameters[i];
    params.push_back(json{{"name", a.parameters.name(i)},
                          {"shape", t.shape()},
                          {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  return json{{"format", "namformer-model"},
              {"schema_version", kArtifactSchemaVersion},
              {"model", model_config_json(a.config)},
              {"encoders", encoders},
              {"ranges", ranges},
              {"seed", a.seed},
              {"loss", to_string(a.loss)},
              {"target", a.target},
              {"parameters", params}};
}

}  // namespace

NamFormer ModelArtifact::build_model() const {
  std::vector<FeatureKind> kinds;
  std::vector<std::size_t> widths;
  for (const FeatureEncoder& f : encoders.features) {
    kinds.push_back(f.spec.kind);
    widths.push_back(f.width());
  }
  return NamFormer(config, std::move(kinds), std::move(widths), parameters);
}

ModelArtifact make_artifact(const NamFormer& model, const EncoderState& encoders,
                            const Dataset& train, std::uint64_t seed, LossKind loss,
                            const std::string& target) {
  ModelArtifact a;
  a.config = model.config();
  a.encoders = encoders;
  for (std::size_t j = 0; j < encoders.feature_count(); ++j) {
    if (!encoders.features[j].numeric() || train.columns.at(j).numeric.empty()) {
      a.ranges.emplace_back(std::nullopt);
      continue;
    }
    const auto [lo, hi] = std::minmax_element(train.columns[j].numeric.begin(),
                                              train.columns[j].numeric.end());
    a.ranges.emplace_back(std::make_pair(*lo, *hi));
  }
  a.seed = seed;
  a.loss = loss;
  a.target = target;
  a.parameters = model.parameters();
  return a;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string serialize_artifact(const ModelArtifact& artifact) {
  json doc = payload_json(artifact);
  doc["checksum"] = sha256_hex(payload_json(artifact).dump());
  return doc.dump(1) + "\n";
}

ModelArtifact parse_artifact(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("artifact: malformed JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "namformer-model") {
      throw std::invalid_argument("artifact: not a namformer model file");
    }
    const int version = doc.at("schema_version").get<int>();
    if (version != kArtifactSchemaVersion) {
      throw std::invalid_argument("artifact: unsupported schema_version " + std::to_string(version));
    }
    const std::string stored = doc.at("checksum").get<std::string>();
    doc.erase("checksum");
    if (sha256_hex(doc.dump()) != stored) {
      throw std::invalid_argument("artifact: checksum mismatch, file is corrupt or edited");
    }

    ModelArtifact a;
    a.config = model_config_from(doc.at("model"));
    for (const json& f : doc.at("encoders")) a.encoders.features.push_back(encoder_from(f));
    for (const json& r : doc.at("ranges")) {
      if (r.is_null()) {
        a.ranges.emplace_back(std::nullopt);
      } else {
        a.ranges.emplace_back(std::make_pair(r.at(0).get<double>(), r.at(1).get<double>()));
      }
    }
    if (a.ranges.size() != a.encoders.feature_count()) {
      throw std::invalid_argument("artifact: one range entry per feature expected");
    }
    a.seed = doc.at("seed").get<std::uint64_t>();
    a.loss = parse_loss(doc.at("loss").get<std::string>());
    a.target = doc.at("target").get<std::string>();
    for (const json& p : doc.at("parameters")) {
      const std::string name = p.at("name").get<std::string>();
      Shape shape = p.at("shape").get<Shape>();
      std::vector<double> values = p.at("values").get<std::vector<double>>();
      if (values.size() != shape_size(shape)) {
        throw std::invalid_argument("artifact: parameter '" + name + "' declares shape " +
                                    shape_string(shape) + " but holds " +
                                    std::to_string(values.size()) + " values");
      }
      a.parameters.add(name, Tensor(std::move(shape), std::move(values)));
    }
    a.build_model();  // checks the parameter layout against the config
    return a;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("artifact: ") + e.what());
  }
}

void save_artifact(const ModelArtifact& artifact, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << serialize_artifact(artifact);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ModelArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_artifact(text.str());
}

}  // namespace namformer
