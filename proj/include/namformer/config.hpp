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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "namformer/data.hpp"
#include "namformer/encoding.hpp"
#include "namformer/model.hpp"
#include "namformer/simulation.hpp"
#include "namformer/training.hpp"

namespace namformer {

inline constexpr int kConfigSchemaVersion = 1;

struct OutputPaths {
  std::string history;  // per-epoch table written by train; empty derives it from the model path
};

// Everything a CLI run needs, read from one JSON document. Every section is
// optional and falls back to the library defaults.
struct RunConfig {
  SimConfig simulation;
  ModelConfig model;
  TrainConfig training;
  bool loss_set = false;  // false: the loss follows the task
  BinCounts bins;
  std::vector<FeatureSpec> features;  // empty: the simulated schema
  std::string target = "y";
  OutputPaths output;

  // Feature specs to read a CSV with: `features`, or the simulator's columns.
  std::vector<FeatureSpec> feature_specs() const;
  void set_seed(std::uint64_t seed);
};

// Rejects unknown keys, wrong types and a missing or unsupported
// schema_version; messages name the offending key.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace namformer
