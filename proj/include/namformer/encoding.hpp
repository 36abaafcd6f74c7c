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
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "namformer/data.hpp"
#include "namformer/tensor.hpp"

namespace namformer {

// z_t = 1[x >= b_t] for each boundary; non-increasing across t.
std::vector<double> encode_thermometer(double x, std::span<const double> boundaries);

// Piecewise-linear encoding over edges b_0 < ... < b_T, one component per bin:
// 0 below b_{t-1}, 1 at or above b_t, linear in between.
std::vector<double> encode_ple(double x, std::span<const double> edges);

double encode_standardize(double x, double mean, double std);

struct NumericEncoder {
  NumericEncoding kind = NumericEncoding::kPle;
  // Thermometer: interior thresholds b_1..b_T. PLE: edges b_0..b_T including
  // the training minimum and maximum. Unused for standardization.
  std::vector<double> boundaries;
  double mean = 0.0;
  double std = 1.0;
  bool degenerate = false;  // tree produced no split; fallback boundary in use

  std::size_t width() const;
  std::vector<double> encode(double x) const;
};

// Levels map to 1..K in sorted order; 0 is the unknown-level slot.
struct CategoricalEncoder {
  std::vector<std::string> levels;

  std::size_t cardinality() const { return levels.size() + 1; }
  std::size_t index_of(const std::string& value) const;
};

std::size_t tokenize_categorical(const std::string& value, const CategoricalEncoder& vocabulary);

struct FeatureEncoder {
  FeatureSpec spec;
  std::variant<NumericEncoder, CategoricalEncoder> state;

  bool numeric() const { return spec.kind == FeatureKind::kNumeric; }
  const NumericEncoder& as_numeric() const { return std::get<NumericEncoder>(state); }
  const CategoricalEncoder& as_categorical() const { return std::get<CategoricalEncoder>(state); }
  // Encoded width T_j for numeric features; vocabulary size for categorical ones.
  std::size_t width() const;
};

struct EncoderState {
  std::vector<FeatureEncoder> features;

  std::size_t feature_count() const { return features.size(); }
};

struct BinCounts {
  std::size_t thermometer = 150;
  std::size_t ple = 25;
};

// Fits per-feature encoders on a training split. Numeric boundaries come from
// a tree fitted against the target, so the split must carry targets.
EncoderState fit_encoders(const Dataset& train, const BinCounts& bins = {});

// A dataset in model-ready form: numeric features as [n, 1, T_j] tensors,
// categorical features as vocabulary indices.
struct EncodedData {
  std::vector<Tensor> numeric;                         // empty tensor for categorical slots
  std::vector<std::vector<std::size_t>> categorical;   // empty for numeric slots
  std::vector<double> target;

  std::size_t rows() const { return target.size(); }
  EncodedData gather(std::span<const std::size_t> rows) const;
};

EncodedData encode_dataset(const EncoderState& encoders, const Dataset& data);

}  // namespace namformer
