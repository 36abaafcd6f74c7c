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

#include "namformer/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace namformer {

void FeatureSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("feature spec: empty name");
  if (kind == FeatureKind::kNumeric && !encoding) {
    throw std::invalid_argument("feature '" + name + "': numeric features need an encoding");
  }
  if (kind == FeatureKind::kCategorical && encoding) {
    throw std::invalid_argument("feature '" + name + "': categorical features take no encoding");
  }
}

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::kNumeric ? "numeric" : "categorical";
}

std::string to_string(NumericEncoding encoding) {
  switch (encoding) {
    case NumericEncoding::kThermometer: return "thermometer";
    case NumericEncoding::kPle: return "ple";
    case NumericEncoding::kStandardize: return "standardize";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(const std::string& text) {
  if (text == "numeric") return FeatureKind::kNumeric;
  if (text == "categorical") return FeatureKind::kCategorical;
  throw std::invalid_argument("unknown feature kind '" + text + "'");
}

NumericEncoding parse_numeric_encoding(const std::string& text) {
  if (text == "thermometer") return NumericEncoding::kThermometer;
  if (text == "ple") return NumericEncoding::kPle;
  if (text == "standardize") return NumericEncoding::kStandardize;
  throw std::invalid_argument("unknown numeric encoding '" + text + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features;
  out.columns.resize(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const FeatureColumn& src = columns[j];
    FeatureColumn& dst = out.columns[j];
    if (features[j].kind == FeatureKind::kNumeric) {
      dst.numeric.reserve(rows.size());
      for (std::size_t r : rows) dst.numeric.push_back(src.numeric.at(r));
    } else {
      dst.levels.reserve(rows.size());
      for (std::size_t r : rows) dst.levels.push_back(src.levels.at(r));
    }
  }
  out.target.reserve(rows.size());
  for (std::size_t r : rows) out.target.push_back(target.at(r));
  return out;
}

void Dataset::validate() const {
  if (columns.size() != features.size()) {
    throw std::invalid_argument("dataset: column count does not match feature specs");
  }
  for (std::size_t j = 0; j < features.size(); ++j) {
    features[j].validate();
    const std::size_t n = features[j].kind == FeatureKind::kNumeric ? columns[j].numeric.size()
                                                                     : columns[j].levels.size();
    if (n != rows()) {
      throw std::invalid_argument("dataset: column '" + features[j].name + "' has " +
                                  std::to_string(n) + " rows, target has " +
                                  std::to_string(rows()));
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

namespace {

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && *first == ' ') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw std::invalid_argument("row " + std::to_string(row) + ", column '" + column +
                                "': non-numeric value '" + cell + "'");
  }
  return value;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Dataset read_csv(std::istream& in, const std::vector<FeatureSpec>& specs,
                 const std::string& target_column) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header row");
  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);

  const auto target_it = index.find(target_column);
  if (target_it == index.end()) {
    throw std::invalid_argument("csv: target column '" + target_column + "' not found");
  }
  std::vector<std::size_t> feature_cols;
  for (const FeatureSpec& spec : specs) {
    spec.validate();
    const auto it = index.find(spec.name);
    if (it == index.end()) {
      throw std::invalid_argument("csv: feature column '" + spec.name + "' not found");
    }
    feature_cols.push_back(it->second);
  }

  Dataset data;
  data.features = specs;
  data.columns.resize(specs.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const std::string& cell = cells[feature_cols[j]];
      if (specs[j].kind == FeatureKind::kNumeric) {
        data.columns[j].numeric.push_back(parse_number(cell, row, specs[j].name));
      } else {
        data.columns[j].levels.push_back(cell);
      }
    }
    data.target.push_back(parse_number(cells[target_it->second], row, target_column));
  }
  return data;
}

Dataset read_csv_file(const std::string& path, const std::vector<FeatureSpec>& specs,
                      const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return read_csv(in, specs, target_column);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const Dataset& data, const std::string& target_column) {
  data.validate();
  for (const FeatureSpec& spec : data.features) out << quote_if_needed(spec.name) << ',';
  out << target_column << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t j = 0; j < data.features.size(); ++j) {
      if (data.features[j].kind == FeatureKind::kNumeric) {
        out << format_double(data.columns[j].numeric[r]);
      } else {
        out << quote_if_needed(data.columns[j].levels[r]);
      }
      out << ',';
    }
    out << format_double(data.target[r]) << '\n';
  }
}

}  // namespace namformer
