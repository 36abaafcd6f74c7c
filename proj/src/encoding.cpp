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

#include "namformer/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "namformer/tree.hpp"

namespace namformer {

std::vector<double> encode_thermometer(double x, std::span<const double> boundaries) {
  std::vector<double> z(boundaries.size());
  for (std::size_t t = 0; t < boundaries.size(); ++t) z[t] = x >= boundaries[t] ? 1.0 : 0.0;
  return z;
}

std::vector<double> encode_ple(double x, std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("encode_ple: need at least two edges");
  std::vector<double> z(edges.size() - 1);
  for (std::size_t t = 1; t < edges.size(); ++t) {
    const double lo = edges[t - 1];
    const double hi = edges[t];
    if (x < lo) {
      z[t - 1] = 0.0;
    } else if (x >= hi) {
      z[t - 1] = 1.0;
    } else {
      z[t - 1] = (x - lo) / (hi - lo);
    }
  }
  return z;
}

double encode_standardize(double x, double mean, double std) {
  if (!(std > 0.0)) throw std::invalid_argument("encode_standardize: std must be positive");
  return (x - mean) / std;
}

std::size_t NumericEncoder::width() const {
  switch (kind) {
    case NumericEncoding::kThermometer: return boundaries.size();
    case NumericEncoding::kPle: return boundaries.size() - 1;
    case NumericEncoding::kStandardize: return 1;
  }
  return 0;
}

std::vector<double> NumericEncoder::encode(double x) const {
  switch (kind) {
    case NumericEncoding::kThermometer: return encode_thermometer(x, boundaries);
    case NumericEncoding::kPle: return encode_ple(x, boundaries);
    case NumericEncoding::kStandardize: return {encode_standardize(x, mean, std)};
  }
  return {};
}

std::size_t CategoricalEncoder::index_of(const std::string& value) const {
  const auto it = std::lower_bound(levels.begin(), levels.end(), value);
  if (it == levels.end() || *it != value) return 0;
  return static_cast<std::size_t>(it - levels.begin()) + 1;
}

std::size_t tokenize_categorical(const std::string& value, const CategoricalEncoder& vocabulary) {
  return vocabulary.index_of(value);
}

std::size_t FeatureEncoder::width() const {
  return numeric() ? as_numeric().width() : as_categorical().cardinality();
}

EncoderState fit_encoders(const Dataset& train, const BinCounts& bins) {
  train.validate();
  if (train.rows() == 0) throw std::invalid_argument("fit_encoders: empty training split");
  EncoderState state;
  for (std::size_t j = 0; j < train.feature_count(); ++j) {
    const FeatureSpec& spec = train.features[j];
    FeatureEncoder fe{spec, NumericEncoder{}};
    if (spec.kind == FeatureKind::kCategorical) {
      const std::set<std::string> unique(train.columns[j].levels.begin(),
                                         train.columns[j].levels.end());
      fe.state = CategoricalEncoder{std::vector<std::string>(unique.begin(), unique.end())};
      state.features.push_back(std::move(fe));
      continue;
    }
    const std::vector<double>& x = train.columns[j].numeric;
    NumericEncoder enc;
    enc.kind = *spec.encoding;
    if (enc.kind == NumericEncoding::kStandardize) {
      double m = 0.0;
      for (double v : x) m += v;
      m /= static_cast<double>(x.size());
      double var = 0.0;
      for (double v : x) var += (v - m) * (v - m);
      var /= static_cast<double>(x.size());
      if (!(var > 0.0)) {
        throw std::invalid_argument("fit_encoders: feature '" + spec.name +
                                    "' is constant and cannot be standardized");
      }
      enc.mean = m;
      enc.std = std::sqrt(var);
    } else {
      const std::size_t max_bins =
          enc.kind == NumericEncoding::kThermometer ? bins.thermometer : bins.ple;
      if (x.size() < 2) {
        throw std::invalid_argument("fit_encoders: feature '" + spec.name +
                                    "' needs at least two training rows");
      }
      const Boundaries b = extract_boundaries(x, train.target, max_bins);
      enc.degenerate = b.degenerate;
      if (enc.kind == NumericEncoding::kThermometer) {
        enc.boundaries = b.thresholds;
      } else {
        const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
        if (*lo < *hi) {
          enc.boundaries.push_back(*lo);
          enc.boundaries.insert(enc.boundaries.end(), b.thresholds.begin(), b.thresholds.end());
          enc.boundaries.push_back(*hi);
        } else {
          enc.boundaries = {*lo - 0.5, *lo + 0.5};
        }
      }
    }
    fe.state = std::move(enc);
    state.features.push_back(std::move(fe));
  }
  return state;
}

EncodedData EncodedData::gather(std::span<const std::size_t> rows) const {
  EncodedData out;
  out.numeric.resize(numeric.size());
  out.categorical.resize(categorical.size());
  for (std::size_t j = 0; j < numeric.size(); ++j) {
    if (numeric[j].size() == 0) continue;
    const std::size_t width = numeric[j].shape().back();
    Tensor t(Shape{rows.size(), 1, width});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(numeric[j].data() + rows[i] * width, width, t.data() + i * width);
    }
    out.numeric[j] = std::move(t);
  }
  for (std::size_t j = 0; j < categorical.size(); ++j) {
    if (categorical[j].empty()) continue;
    out.categorical[j].reserve(rows.size());
    for (std::size_t r : rows) out.categorical[j].push_back(categorical[j][r]);
  }
  out.target.reserve(rows.size());
  for (std::size_t r : rows) out.target.push_back(target[r]);
  return out;
}

EncodedData encode_dataset(const EncoderState& encoders, const Dataset& data) {
  data.validate();
  if (data.feature_count() != encoders.feature_count()) {
    throw std::invalid_argument("encode_dataset: data has " +
                                std::to_string(data.feature_count()) + " features, encoders " +
                                std::to_string(encoders.feature_count()));
  }
  const std::size_t n = data.rows();
  EncodedData out;
  out.numeric.resize(encoders.feature_count());
  out.categorical.resize(encoders.feature_count());
  out.target = data.target;
  for (std::size_t j = 0; j < encoders.feature_count(); ++j) {
    const FeatureEncoder& fe = encoders.features[j];
    if (fe.spec.kind != data.features[j].kind || fe.spec.name != data.features[j].name) {
      throw std::invalid_argument("encode_dataset: feature " + std::to_string(j) + " ('" +
                                  data.features[j].name + "') does not match encoder '" +
                                  fe.spec.name + "'");
    }
    if (fe.numeric()) {
      const NumericEncoder& enc = fe.as_numeric();
      const std::size_t width = enc.width();
      Tensor t(Shape{n, 1, width});
      for (std::size_t r = 0; r < n; ++r) {
        const std::vector<double> z = enc.encode(data.columns[j].numeric[r]);
        std::copy(z.begin(), z.end(), t.data() + r * width);
      }
      out.numeric[j] = std::move(t);
    } else {
      const CategoricalEncoder& enc = fe.as_categorical();
      out.categorical[j].reserve(n);
      for (const std::string& level : data.columns[j].levels) {
        out.categorical[j].push_back(enc.index_of(level));
      }
    }
  }
  return out;
}

}  // namespace namformer
