// Copyright 2026 The geotrain Authors.
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

// Operator DAG: node/edge model, topological order, backward-edge
// derivation, shape inference and per-device sub-DAG boundaries.

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace geotrain {

using DeviceId = int;

enum class OpType { kPlaceholder, kVariable, kParametricOp, kNonParametricOp, kLossFunction };

std::string_view to_string(OpType type) noexcept;
OpType parse_op_type(std::string_view text);

/// Placeholders carry data that never needs a gradient; everything else does.
constexpr bool default_requires_grad(OpType type) noexcept { return type != OpType::kPlaceholder; }

struct OpNode {
  std::string name;
  OpType type = OpType::kNonParametricOp;
  std::string kind;                          // conv2d, linear, relu, add, cross_entropy, input, label, tensor
  std::vector<std::string> args;             // producers, in argument order
  std::map<std::string, std::int64_t> attrs;  // kind-specific hyperparameters
  std::vector<std::int64_t> shape;           // per-sample shape for Placeholder / Variable
  bool requires_grad = true;
};

OpNode make_node(std::string name, OpType type, std::string kind, std::vector<std::string> args = {},
                 std::map<std::string, std::int64_t> attrs = {}, std::vector<std::int64_t> shape = {});

/// Directed edge between two named operators. FP edges point producer ->
/// consumer; BP edges point consumer -> producer.
struct Edge {
  std::string from;
  std::string to;

  auto operator<=>(const Edge&) const = default;
};

class OpDag {
 public:
  OpDag() = default;

  const std::map<std::string, OpNode>& nodes() const noexcept { return nodes_; }
  const std::set<Edge>& fp_edges() const noexcept { return fp_edges_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(std::string_view name) const;
  const OpNode& node(std::string_view name) const;
  /// Consumers of a node's output, sorted by name.
  const std::vector<std::string>& users(std::string_view name) const;
  /// Distinct producers feeding a node, in first-argument order.
  std::vector<std::string> parents(std::string_view name) const;

 private:
  friend OpDag build_dag(std::vector<OpNode> nodes);

  std::map<std::string, OpNode> nodes_;
  std::set<Edge> fp_edges_;
  std::map<std::string, std::vector<std::string>, std::less<>> users_;
};

/// Validates structure (names, references, acyclicity, sinks) and
/// materializes FP edges from args. Operator kinds are not interpreted here.
OpDag build_dag(std::vector<OpNode> nodes);

/// Kahn order; among ready nodes the lexicographically smallest goes first.
std::vector<std::string> topological_order(const OpDag& dag);

/// Reverse of every FP edge whose producer requires a gradient.
std::set<Edge> derive_bp_edges(const OpDag& dag);

/// Gradient edge label, "Producer-Consumer" for the FP edge it mirrors.
std::string grad_label(const Edge& fp_edge);

using Assignment = std::map<std::string, DeviceId>;

struct SubDagBoundary {
  DeviceId device = 0;
  std::vector<std::string> op_nodes;
  std::vector<Edge> required_acti;
  std::vector<Edge> send_acti;
  std::vector<std::string> required_grad;
  std::vector<std::string> send_grad;
};

/// One boundary per device that owns at least one node, ordered by device id.
std::vector<SubDagBoundary> compute_boundaries(const OpDag& dag, const Assignment& assignment);

/// Throws UnassignedNode when any node lacks a device.
void check_assignment(const OpDag& dag, const Assignment& assignment);

/// Output shape of one operator. Batched tensors have an implicit leading
/// micro-batch dimension; unbatched ones (variables and anything derived only
/// from them, plus scalar losses) broadcast over it.
struct TensorShape {
  bool batched = true;
  std::vector<std::int64_t> dims;

  std::int64_t per_sample_elements() const noexcept;
  std::int64_t elements(std::int64_t batch) const noexcept;

  bool operator==(const TensorShape&) const = default;
};

/// Shape inference over every node; throws MissingShapeAttr / ShapeMismatch.
std::map<std::string, TensorShape> infer_shapes(const OpDag& dag);

/// Output shape of a single node given its input shapes (argument order).
TensorShape infer_node_shape(const OpNode& node, const std::vector<TensorShape>& inputs);

std::int64_t required_attr(const OpNode& node, const std::string& key);
std::int64_t attr_or(const OpNode& node, const std::string& key, std::int64_t fallback);

}  // namespace geotrain
