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

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "namformer/encoding.hpp"
#include "namformer/model.hpp"
#include "namformer/training.hpp"

namespace namformer {

inline constexpr int kArtifactSchemaVersion = 1;

// A trained model with everything needed to encode raw rows and predict.
struct ModelArtifact {
  ModelConfig config;
  EncoderState encoders;
  // Training-split [min, max] per numeric feature; empty for categorical ones.
  std::vector<std::optional<std::pair<double, double>>> ranges;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kMse;
  std::string target = "y";
  Parameters parameters;

  NamFormer build_model() const;
};

ModelArtifact make_artifact(const NamFormer& model, const EncoderState& encoders,
                            const Dataset& train, std::uint64_t seed, LossKind loss,
                            const std::string& target);

// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

// JSON text carrying a checksum over everything else in the document.
std::string serialize_artifact(const ModelArtifact& artifact);
// Verifies the checksum, schema version and every array's declared shape.
ModelArtifact parse_artifact(const std::string& text);

void save_artifact(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_artifact(const std::string& path);

}  // namespace namformer
