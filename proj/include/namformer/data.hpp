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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace namformer {

enum class FeatureKind { kNumeric, kCategorical };
enum class NumericEncoding { kThermometer, kPle, kStandardize };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  std::optional<NumericEncoding> encoding;  // set iff kind is numeric

  void validate() const;
};

std::string to_string(FeatureKind kind);
std::string to_string(NumericEncoding encoding);
FeatureKind parse_feature_kind(const std::string& text);
NumericEncoding parse_numeric_encoding(const std::string& text);

struct FeatureColumn {
  std::vector<double> numeric;      // numeric features
  std::vector<std::string> levels;  // categorical features
};

// Column-oriented table of features plus a target.
struct Dataset {
  std::vector<FeatureSpec> features;
  std::vector<FeatureColumn> columns;  // parallel to features
  std::vector<double> target;

  std::size_t rows() const { return target.size(); }
  std::size_t feature_count() const { return features.size(); }
  Dataset subset(std::span<const std::size_t> rows) const;
  void validate() const;
};

// Reads a headered CSV. Every spec must name a column; numeric cells must
// parse as finite doubles. Errors name the offending row and column.
Dataset read_csv(std::istream& in, const std::vector<FeatureSpec>& specs,
                 const std::string& target_column);
Dataset read_csv_file(const std::string& path, const std::vector<FeatureSpec>& specs,
                      const std::string& target_column);

// Writes features in spec order followed by the target column.
void write_csv(std::ostream& out, const Dataset& data, const std::string& target_column = "y");

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace namformer
