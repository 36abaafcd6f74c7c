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

#include "namformer/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace namformer {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + what + " (" + shape_string(a) +
                              " vs " + shape_string(b) + ")");
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

// Geometry of a matmul application, shared by forward and backward.
struct MatmulDims {
  std::size_t batch = 1;  // 1 when b is a shared rank-2 matrix
  std::size_t m = 0, k = 0, n = 0;
  bool shared_b = true;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b, bool transpose_b) {
  if (a.size() < 2 || b.size() < 2) shape_error(Op::kMatmul, a, b, "operands need rank >= 2");
  MatmulDims d;
  d.k = a.back();
  const std::size_t b_rows = b[b.size() - 2];
  const std::size_t b_cols = b.back();
  const std::size_t b_inner = transpose_b ? b_cols : b_rows;
  d.n = transpose_b ? b_rows : b_cols;
  if (b_inner != d.k) shape_error(Op::kMatmul, a, b, "inner dimensions disagree");
  if (b.size() == 2) {
    d.shared_b = true;
    d.m = shape_size(a) / d.k;
    d.batch = 1;
    return d;
  }
  if (a.size() != b.size() || !std::equal(a.begin(), a.end() - 2, b.begin())) {
    shape_error(Op::kMatmul, a, b, "batched operands need identical leading extents");
  }
  d.shared_b = false;
  d.m = a[a.size() - 2];
  d.batch = shape_size(a) / (d.m * d.k);
  return d;
}

// Split a shape around an axis into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void accumulate(std::optional<Tensor>& slot, const Shape& shape, std::span<const double> grad) {
  if (!slot) {
    slot = Tensor(shape, std::vector<double>(grad.begin(), grad.end()));
    return;
  }
  double* dst = slot->data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += grad[i];
}

// Gradient of a broadcast operand: sum over the leading extents.
std::vector<double> reduce_to(std::span<const double> grad, std::size_t tail_size) {
  std::vector<double> out(tail_size, 0.0);
  if (tail_size == 0) return out;
  for (std::size_t i = 0; i < grad.size(); ++i) out[i % tail_size] += grad[i];
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMultiply: return "multiply";
    case Op::kScale: return "scale";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kRelu: return "relu";
    case Op::kGelu: return "gelu";
    case Op::kSoftplus: return "softplus";
    case Op::kSoftmax: return "softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kEmbedding: return "embedding";
    case Op::kDropout: return "dropout";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }

const Tensor& Gradients::of(Var v) const {
  if (!has(v)) {
    throw std::out_of_range("Gradients::of: node " + std::to_string(v.id) +
                            " has no gradient (constant or unreachable)");
  }
  return *grads_[v.id];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  return push(std::move(node));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = false;
  return push(std::move(node));
}

Var Tape::apply(Op op, std::span<const Var> inputs, OpAttributes attrs) {
  for (const Var& v : inputs) {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw std::invalid_argument(std::string(op_name(op)) + ": input from another tape");
    }
  }
  auto arity = [&](std::size_t want) {
    if (inputs.size() != want) {
      throw std::invalid_argument(std::string(op_name(op)) + ": expected " + std::to_string(want) +
                                  " inputs, got " + std::to_string(inputs.size()));
    }
  };

  Node node;
  node.op = op;
  for (const Var& v : inputs) {
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }

  switch (op) {
    case Op::kLeaf:
      throw std::invalid_argument("apply: leaves are created with leaf() or constant()");

    case Op::kMatmul: {
      arity(2);
      const Tensor& a = nodes_[inputs[0].id].value;
      const Tensor& b = nodes_[inputs[1].id].value;
      const MatmulDims d = matmul_dims(a.shape(), b.shape(), attrs.transpose_b);
      Shape out_shape(a.shape().begin(), a.shape().end() - 1);
      out_shape.push_back(d.n);
      Tensor out(out_shape);
      if (d.shared_b) {
        ConstMap am(a.data(), d.m, d.k);
        MutMap cm(out.data(), d.m, d.n);
        if (attrs.transpose_b) {
          cm.noalias() = am * ConstMap(b.data(), d.n, d.k).transpose();
        } else {
          cm.noalias() = am * ConstMap(b.data(), d.k, d.n);
        }
      } else {
        for (std::size_t i = 0; i < d.batch; ++i) {
          ConstMap am(a.data() + i * d.m * d.k, d.m, d.k);
          MutMap cm(out.data() + i * d.m * d.n, d.m, d.n);
          const double* bp = b.data() + i * d.k * d.n;
          if (attrs.transpose_b) {
            cm.noalias() = am.lazyProduct(ConstMap(bp, d.n, d.k).transpose());
          } else {
            cm.noalias() = am.lazyProduct(ConstMap(bp, d.k, d.n));
          }
        }
      }
      node.value = std::move(out);
      break;
    }

    case Op::kAdd:
    case Op::kMultiply: {
      arity(2);
      const Tensor& a = nodes_[inputs[0].id].value;
      const Tensor& b = nodes_[inputs[1].id].value;
      if (!is_suffix(a.shape(), b.shape())) {
        shape_error(op, a.shape(), b.shape(), "second operand must match a trailing suffix");
      }
      Tensor out(a.shape());
      const std::size_t tail = b.size();
      const double* ap = a.data();
      const double* bp = b.data();
      double* op_ = out.data();
      if (op == Op::kAdd) {
        for (std::size_t i = 0; i < a.size(); i += tail)
          for (std::size_t j = 0; j < tail; ++j) op_[i + j] = ap[i + j] + bp[j];
      } else {
        for (std::size_t i = 0; i < a.size(); i += tail)
          for (std::size_t j = 0; j < tail; ++j) op_[i + j] = ap[i + j] * bp[j];
      }
      node.value = std::move(out);
      break;
    }

    case Op::kScale: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * attrs.scalar;
      node.value = std::move(out);
      break;
    }

    case Op::kSum:
    case Op::kMean: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      if (a.size() == 0) throw std::invalid_argument(std::string(op_name(op)) + ": empty tensor");
      double total = 0.0;
      for (double v : a.values()) total += v;
      if (op == Op::kMean) total /= static_cast<double>(a.size());
      node.value = Tensor::scalar(total);
      break;
    }

    case Op::kRelu:
    case Op::kGelu:
    case Op::kSoftplus: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        if (op == Op::kRelu) {
          out[i] = x > 0.0 ? x : 0.0;
        } else if (op == Op::kGelu) {
          out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
        } else {
          out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        }
      }
      node.value = std::move(out);
      break;
    }

    case Op::kSoftmax: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      if (a.rank() == 0) throw std::invalid_argument("softmax: needs rank >= 1");
      const std::size_t width = a.shape().back();
      Tensor out(a.shape());
      for (std::size_t r = 0; r < a.size(); r += width) {
        double hi = a[r];
        for (std::size_t j = 1; j < width; ++j) hi = std::max(hi, a[r + j]);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          out[r + j] = std::exp(a[r + j] - hi);
          total += out[r + j];
        }
        for (std::size_t j = 0; j < width; ++j) out[r + j] /= total;
      }
      node.value = std::move(out);
      break;
    }

    case Op::kLayerNorm: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      if (a.rank() == 0) throw std::invalid_argument("layer_norm: needs rank >= 1");
      const std::size_t width = a.shape().back();
      Tensor out(a.shape());
      node.saved.resize(a.size() / width);
      for (std::size_t r = 0, row = 0; r < a.size(); r += width, ++row) {
        double mu = 0.0;
        for (std::size_t j = 0; j < width; ++j) mu += a[r + j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::size_t j = 0; j < width; ++j) var += (a[r + j] - mu) * (a[r + j] - mu);
        var /= static_cast<double>(width);
        const double inv_std = 1.0 / std::sqrt(var + attrs.scalar);
        node.saved[row] = inv_std;
        for (std::size_t j = 0; j < width; ++j) out[r + j] = (a[r + j] - mu) * inv_std;
      }
      node.value = std::move(out);
      break;
    }

    case Op::kConcat: {
      if (inputs.empty()) throw std::invalid_argument("concat: no inputs");
      const Shape& first = nodes_[inputs[0].id].value.shape();
      if (attrs.axis >= first.size()) {
        throw std::invalid_argument("concat: axis " + std::to_string(attrs.axis) +
                                    " out of range for " + shape_string(first));
      }
      Shape out_shape = first;
      out_shape[attrs.axis] = 0;
      for (const Var& v : inputs) {
        const Shape& s = nodes_[v.id].value.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
          if (i != attrs.axis && s[i] != first[i]) ok = false;
        }
        if (!ok) shape_error(op, first, s, "parts disagree off the concat axis");
        out_shape[attrs.axis] += s[attrs.axis];
      }
      Tensor out(out_shape);
      const AxisSplit os = split_axis(out_shape, attrs.axis);
      std::size_t offset = 0;
      for (const Var& v : inputs) {
        const Tensor& part = nodes_[v.id].value;
        const std::size_t chunk = part.shape()[attrs.axis] * os.inner;
        for (std::size_t o = 0; o < os.outer; ++o) {
          std::copy_n(part.data() + o * chunk, chunk,
                      out.data() + o * os.extent * os.inner + offset * os.inner);
        }
        offset += part.shape()[attrs.axis];
      }
      node.value = std::move(out);
      break;
    }

    case Op::kSlice: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      if (attrs.axis >= a.rank() || attrs.begin >= attrs.end || attrs.end > a.extent(attrs.axis)) {
        throw std::invalid_argument("slice: range [" + std::to_string(attrs.begin) + ", " +
                                    std::to_string(attrs.end) + ") on axis " +
                                    std::to_string(attrs.axis) + " invalid for " +
                                    shape_string(a.shape()));
      }
      Shape out_shape = a.shape();
      out_shape[attrs.axis] = attrs.end - attrs.begin;
      Tensor out(out_shape);
      const AxisSplit s = split_axis(a.shape(), attrs.axis);
      const std::size_t chunk = (attrs.end - attrs.begin) * s.inner;
      for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(a.data() + o * s.extent * s.inner + attrs.begin * s.inner, chunk,
                    out.data() + o * chunk);
      }
      node.value = std::move(out);
      break;
    }

    case Op::kEmbedding: {
      arity(1);
      const Tensor& table = nodes_[inputs[0].id].value;
      if (table.rank() != 2) {
        throw std::invalid_argument("embedding: table must be rank 2, got " +
                                    shape_string(table.shape()));
      }
      if (shape_size(attrs.index_shape) != attrs.indices.size()) {
        throw std::invalid_argument("embedding: index shape " + shape_string(attrs.index_shape) +
                                    " does not match " + std::to_string(attrs.indices.size()) +
                                    " indices");
      }
      const std::size_t rows = table.extent(0);
      const std::size_t width = table.extent(1);
      Shape out_shape = attrs.index_shape;
      out_shape.push_back(width);
      Tensor out(out_shape);
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        const std::size_t idx = attrs.indices[i];
        if (idx >= rows) {
          throw std::invalid_argument("embedding: index " + std::to_string(idx) +
                                      " out of range for table " + shape_string(table.shape()));
        }
        std::copy_n(table.data() + idx * width, width, out.data() + i * width);
      }
      node.value = std::move(out);
      break;
    }

    case Op::kDropout: {
      arity(1);
      const Tensor& a = nodes_[inputs[0].id].value;
      if (attrs.scalar < 0.0 || attrs.scalar >= 1.0) {
        throw std::invalid_argument("dropout: rate must lie in [0, 1)");
      }
      if (attrs.mask.size() != a.size()) {
        throw std::invalid_argument("dropout: mask has " + std::to_string(attrs.mask.size()) +
                                    " entries for tensor " + shape_string(a.shape()));
      }
      const double keep_scale = 1.0 / (1.0 - attrs.scalar);
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * attrs.mask[i] * keep_scale;
      node.value = std::move(out);
      break;
    }
  }

  node.attrs = std::move(attrs);
  return push(std::move(node));
}

Gradients Tape::backward(Var seed) const {
  if (seed.tape != this || seed.id >= nodes_.size()) {
    throw std::invalid_argument("backward: seed does not belong to this tape");
  }
  const Tensor& seed_value = nodes_[seed.id].value;
  if (seed_value.size() != 1) {
    throw std::invalid_argument("backward: seed must be scalar, got shape " +
                                shape_string(seed_value.shape()));
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[seed.id] = Tensor(seed_value.shape(), 1.0);
  for (std::size_t i = seed.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!grads[i] || !node.requires_grad || node.op == Op::kLeaf) continue;
    backward_node(node, *grads[i], grads);
  }
  // Only leaves that require gradients are reported, plus interior nodes that were reached.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].requires_grad) grads[i].reset();
  }
  return Gradients(std::move(grads));
}

void Tape::backward_node(const Node& node, const Tensor& grad,
                         std::vector<std::optional<Tensor>>& grads) const {
  auto needs = [&](std::size_t slot) { return nodes_[node.inputs[slot]].requires_grad; };
  auto input = [&](std::size_t slot) -> const Tensor& { return nodes_[node.inputs[slot]].value; };
  auto target = [&](std::size_t slot) -> std::optional<Tensor>& {
    return grads[node.inputs[slot]];
  };
  const OpAttributes& attrs = node.attrs;

  switch (node.op) {
    case Op::kLeaf:
      return;

    case Op::kMatmul: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const MatmulDims d = matmul_dims(a.shape(), b.shape(), attrs.transpose_b);
      if (needs(0)) {
        std::vector<double> ga(a.size());
        for (std::size_t i = 0; i < d.batch; ++i) {
          ConstMap gc(grad.data() + i * d.m * d.n, d.m, d.n);
          MutMap gm(ga.data() + i * d.m * d.k, d.m, d.k);
          const double* bp = b.data() + (d.shared_b ? 0 : i * d.k * d.n);
          if (d.shared_b) {
            if (attrs.transpose_b) {
              gm.noalias() = gc * ConstMap(bp, d.n, d.k);
            } else {
              gm.noalias() = gc * ConstMap(bp, d.k, d.n).transpose();
            }
          } else if (attrs.transpose_b) {
            gm.noalias() = gc.lazyProduct(ConstMap(bp, d.n, d.k));
          } else {
            gm.noalias() = gc.lazyProduct(ConstMap(bp, d.k, d.n).transpose());
          }
        }
        accumulate(target(0), a.shape(), ga);
      }
      if (needs(1)) {
        std::vector<double> gb(b.size(), 0.0);
        for (std::size_t i = 0; i < d.batch; ++i) {
          ConstMap gc(grad.data() + i * d.m * d.n, d.m, d.n);
          ConstMap am(a.data() + i * d.m * d.k, d.m, d.k);
          double* bp = gb.data() + (d.shared_b ? 0 : i * d.k * d.n);
          if (d.shared_b) {
            if (attrs.transpose_b) {
              MutMap(bp, d.n, d.k).noalias() += gc.transpose() * am;
            } else {
              MutMap(bp, d.k, d.n).noalias() += am.transpose() * gc;
            }
          } else if (attrs.transpose_b) {
            MutMap(bp, d.n, d.k).noalias() += gc.transpose().lazyProduct(am);
          } else {
            MutMap(bp, d.k, d.n).noalias() += am.transpose().lazyProduct(gc);
          }
        }
        accumulate(target(1), b.shape(), gb);
      }
      return;
    }

    case Op::kAdd: {
      if (needs(0)) accumulate(target(0), input(0).shape(), grad.values());
      if (needs(1)) {
        const Tensor& b = input(1);
        if (b.size() == grad.size()) {
          accumulate(target(1), b.shape(), grad.values());
        } else {
          accumulate(target(1), b.shape(), reduce_to(grad.values(), b.size()));
        }
      }
      return;
    }

    case Op::kMultiply: {
      const Tensor& a = input(0);
      const Tensor& b = input(1);
      const std::size_t tail = b.size();
      if (needs(0)) {
        std::vector<double> ga(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] = grad[i] * b[i % tail];
        accumulate(target(0), a.shape(), ga);
      }
      if (needs(1)) {
        std::vector<double> gb(tail, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i % tail] += grad[i] * a[i];
        accumulate(target(1), b.shape(), gb);
      }
      return;
    }

    case Op::kScale: {
      std::vector<double> ga(grad.size());
      for (std::size_t i = 0; i < grad.size(); ++i) ga[i] = grad[i] * attrs.scalar;
      accumulate(target(0), input(0).shape(), ga);
      return;
    }

    case Op::kSum:
    case Op::kMean: {
      const Tensor& a = input(0);
      double g = grad.item();
      if (node.op == Op::kMean) g /= static_cast<double>(a.size());
      accumulate(target(0), a.shape(), std::vector<double>(a.size(), g));
      return;
    }

    case Op::kRelu:
    case Op::kGelu:
    case Op::kSoftplus: {
      const Tensor& a = input(0);
      std::vector<double> ga(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i];
        double slope;
        if (node.op == Op::kRelu) {
          slope = x > 0.0 ? 1.0 : 0.0;
        } else if (node.op == Op::kGelu) {
          const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
          slope = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        } else {
          slope = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        }
        ga[i] = grad[i] * slope;
      }
      accumulate(target(0), a.shape(), ga);
      return;
    }

    case Op::kSoftmax: {
      const Tensor& y = node.value;
      const std::size_t width = y.shape().back();
      std::vector<double> ga(y.size());
      for (std::size_t r = 0; r < y.size(); r += width) {
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += grad[r + j] * y[r + j];
        for (std::size_t j = 0; j < width; ++j) ga[r + j] = y[r + j] * (grad[r + j] - dot);
      }
      accumulate(target(0), y.shape(), ga);
      return;
    }

    case Op::kLayerNorm: {
      const Tensor& y = node.value;
      const std::size_t width = y.shape().back();
      const double inv_width = 1.0 / static_cast<double>(width);
      std::vector<double> ga(y.size());
      for (std::size_t r = 0, row = 0; r < y.size(); r += width, ++row) {
        double mean_g = 0.0;
        double mean_gy = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          mean_g += grad[r + j];
          mean_gy += grad[r + j] * y[r + j];
        }
        mean_g *= inv_width;
        mean_gy *= inv_width;
        const double inv_std = node.saved[row];
        for (std::size_t j = 0; j < width; ++j) {
          ga[r + j] = inv_std * (grad[r + j] - mean_g - y[r + j] * mean_gy);
        }
      }
      accumulate(target(0), y.shape(), ga);
      return;
    }

    case Op::kConcat: {
      const AxisSplit os = split_axis(node.value.shape(), attrs.axis);
      std::size_t offset = 0;
      for (std::size_t slot = 0; slot < node.inputs.size(); ++slot) {
        const Tensor& part = input(slot);
        const std::size_t chunk = part.shape()[attrs.axis] * os.inner;
        if (needs(slot)) {
          std::vector<double> gp(part.size());
          for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(grad.data() + o * os.extent * os.inner + offset * os.inner, chunk,
                        gp.data() + o * chunk);
          }
          accumulate(target(slot), part.shape(), gp);
        }
        offset += part.shape()[attrs.axis];
      }
      return;
    }

    case Op::kSlice: {
      const Tensor& a = input(0);
      const AxisSplit s = split_axis(a.shape(), attrs.axis);
      const std::size_t chunk = (attrs.end - attrs.begin) * s.inner;
      std::vector<double> ga(a.size(), 0.0);
      for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(grad.data() + o * chunk, chunk,
                    ga.data() + o * s.extent * s.inner + attrs.begin * s.inner);
      }
      accumulate(target(0), a.shape(), ga);
      return;
    }

    case Op::kEmbedding: {
      const Tensor& table = input(0);
      const std::size_t width = table.extent(1);
      std::vector<double> gt(table.size(), 0.0);
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        double* row = gt.data() + attrs.indices[i] * width;
        const double* g = grad.data() + i * width;
        for (std::size_t j = 0; j < width; ++j) row[j] += g[j];
      }
      accumulate(target(0), table.shape(), gt);
      return;
    }

    case Op::kDropout: {
      const double keep_scale = 1.0 / (1.0 - attrs.scalar);
      std::vector<double> ga(grad.size());
      for (std::size_t i = 0; i < grad.size(); ++i) ga[i] = grad[i] * attrs.mask[i] * keep_scale;
      accumulate(target(0), input(0).shape(), ga);
      return;
    }
  }
}

Var matmul(Var a, Var b, bool transpose_b) {
  OpAttributes attrs;
  attrs.transpose_b = transpose_b;
  const Var in[] = {a, b};
  return a.tape->apply(Op::kMatmul, in, std::move(attrs));
}

namespace {
Var broadcast_binary(Op op, Var a, Var b) {
  // Commutative: put the operand with the full shape first.
  if (a.shape().size() < b.shape().size()) std::swap(a, b);
  const Var in[] = {a, b};
  return a.tape->apply(op, in);
}

Var unary(Op op, Var a, OpAttributes attrs = {}) {
  const Var in[] = {a};
  return a.tape->apply(op, in, std::move(attrs));
}
}  // namespace

Var add(Var a, Var b) { return broadcast_binary(Op::kAdd, a, b); }
Var multiply(Var a, Var b) { return broadcast_binary(Op::kMultiply, a, b); }

Var scale(Var a, double factor) {
  OpAttributes attrs;
  attrs.scalar = factor;
  return unary(Op::kScale, a, std::move(attrs));
}

Var sum(Var a) { return unary(Op::kSum, a); }
Var mean(Var a) { return unary(Op::kMean, a); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var gelu(Var a) { return unary(Op::kGelu, a); }
Var softplus(Var a) { return unary(Op::kSoftplus, a); }
Var softmax(Var a) { return unary(Op::kSoftmax, a); }

Var layer_norm(Var a, double eps) {
  OpAttributes attrs;
  attrs.scalar = eps;
  return unary(Op::kLayerNorm, a, std::move(attrs));
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  OpAttributes attrs;
  attrs.axis = axis;
  return parts[0].tape->apply(Op::kConcat, parts, std::move(attrs));
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttributes attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(Op::kSlice, a, std::move(attrs));
}

Var embedding(Var table, std::vector<std::size_t> indices, Shape index_shape) {
  OpAttributes attrs;
  attrs.indices = std::move(indices);
  attrs.index_shape = std::move(index_shape);
  return unary(Op::kEmbedding, table, std::move(attrs));
}

Var dropout(Var a, double rate, std::vector<double> keep_mask) {
  OpAttributes attrs;
  attrs.scalar = rate;
  attrs.mask = std::move(keep_mask);
  return unary(Op::kDropout, a, std::move(attrs));
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double h) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace namformer
