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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "namformer/tensor.hpp"

namespace namformer {

// The closed set of differentiable primitives. kLeaf marks parameters,
// inputs and constants; every other kind has a forward and a backward rule.
enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kMultiply,
  kScale,
  kSum,
  kMean,
  kRelu,
  kGelu,
  kSoftplus,
  kSoftmax,
  kLayerNorm,
  kConcat,
  kSlice,
  kEmbedding,
  kDropout,
};

std::string_view op_name(Op op);

// Per-application parameters. Only the fields relevant to an op are read.
struct OpAttributes {
  double scalar = 0.0;          // kScale factor, kLayerNorm epsilon, kDropout rate
  std::size_t axis = 0;         // kConcat, kSlice
  std::size_t begin = 0;        // kSlice
  std::size_t end = 0;          // kSlice
  bool transpose_b = false;     // kMatmul: multiply by the transpose of the last two axes of b
  Shape index_shape;            // kEmbedding
  std::vector<std::size_t> indices;  // kEmbedding
  std::vector<double> mask;     // kDropout keep mask, one 0/1 entry per element
};

class Tape;

// Handle to a node of a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const;
};

class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool has(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }
  // Gradient with respect to v; zero-filled when no path reaches v.
  const Tensor& of(Var v) const;

 private:
  std::vector<std::optional<Tensor>> grads_;
};

// Records primitive applications in evaluation order and differentiates them
// in reverse. Single writer; not thread safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Constants never receive gradients and prune the backward pass.
  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var apply(Op op, std::span<const Var> inputs, OpAttributes attrs = {});

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  Op op_at(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs_at(std::size_t id) const { return nodes_.at(id).inputs; }

  // Reverse sweep from a single-element seed. Every node is visited once.
  Gradients backward(Var seed) const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    OpAttributes attrs;
    std::vector<double> saved;  // op-specific forward state (e.g. 1/sigma for layer norm)
    bool requires_grad = false;
  };

  Var push(Node node);
  void backward_node(const Node& node, const Tensor& grad,
                     std::vector<std::optional<Tensor>>& grads) const;

  std::vector<Node> nodes_;
};

// Convenience wrappers over Tape::apply.
Var matmul(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);
Var relu(Var a);
Var gelu(Var a);
Var softplus(Var a);
Var softmax(Var a);
Var layer_norm(Var a, double eps = 1e-5);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var embedding(Var table, std::vector<std::size_t> indices, Shape index_shape);
Var dropout(Var a, double rate, std::vector<double> keep_mask);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double h = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace namformer
