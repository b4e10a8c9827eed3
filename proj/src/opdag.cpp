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

#include "geotrain/opdag.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <queue>
#include <sstream>

#include "geotrain/error.hpp"

namespace geotrain {

std::string_view to_string(OpType type) noexcept {
  switch (type) {
    case OpType::kPlaceholder: return "Placeholder";
    case OpType::kVariable: return "Variable";
    case OpType::kParametricOp: return "ParametricOp";
    case OpType::kNonParametricOp: return "NonParametricOp";
    case OpType::kLossFunction: return "LossFunction";
  }
  return "Unknown";
}

OpType parse_op_type(std::string_view text) {
  for (OpType t : {OpType::kPlaceholder, OpType::kVariable, OpType::kParametricOp,
                   OpType::kNonParametricOp, OpType::kLossFunction}) {
    if (to_string(t) == text) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown op type '" + std::string(text) + "'");
}

OpNode make_node(std::string name, OpType type, std::string kind, std::vector<std::string> args,
                 std::map<std::string, std::int64_t> attrs, std::vector<std::int64_t> shape) {
  OpNode node;
  node.name = std::move(name);
  node.type = type;
  node.kind = std::move(kind);
  node.args = std::move(args);
  node.attrs = std::move(attrs);
  node.shape = std::move(shape);
  node.requires_grad = default_requires_grad(type);
  return node;
}

bool OpDag::contains(std::string_view name) const { return nodes_.find(std::string(name)) != nodes_.end(); }

const OpNode& OpDag::node(std::string_view name) const {
  auto it = nodes_.find(std::string(name));
  if (it == nodes_.end()) throw Error(ErrorCode::kUnknownArgReference, "no node named '" + std::string(name) + "'");
  return it->second;
}

const std::vector<std::string>& OpDag::users(std::string_view name) const {
  auto it = users_.find(name);
  if (it == users_.end()) throw Error(ErrorCode::kUnknownArgReference, "no node named '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> OpDag::parents(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& a : node(name).args) {
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  return out;
}

namespace {

// Returns one cycle (closed: first == last) or an empty vector.
std::vector<std::string> find_cycle(const std::map<std::string, OpNode>& nodes) {
  enum class Mark { kNone, kActive, kDone };
  std::map<std::string, Mark> mark;
  std::vector<std::string> stack;
  std::vector<std::string> cycle;

  std::function<bool(const std::string&)> visit = [&](const std::string& name) {
    mark[name] = Mark::kActive;
    stack.push_back(name);
    for (const auto& arg : nodes.at(name).args) {
      Mark m = mark[arg];
      if (m == Mark::kActive) {
        auto start = std::find(stack.begin(), stack.end(), arg);
        cycle.assign(start, stack.end());
        cycle.push_back(arg);
        return true;
      }
      if (m == Mark::kNone && visit(arg)) return true;
    }
    stack.pop_back();
    mark[name] = Mark::kDone;
    return false;
  };

  for (const auto& [name, _] : nodes) {
    if (mark[name] == Mark::kNone && visit(name)) {
      // Args point consumer -> producer; report in data-flow direction.
      std::reverse(cycle.begin(), cycle.end());
      return cycle;
    }
  }
  return {};
}

}  // namespace

OpDag build_dag(std::vector<OpNode> nodes) {
  OpDag dag;
  for (auto& desc : nodes) {
    if (desc.name.empty()) throw Error(ErrorCode::kInvalidDag, "node with empty name");
    std::string name = desc.name;
    if (!dag.nodes_.emplace(name, std::move(desc)).second) {
      throw Error(ErrorCode::kDuplicateName, "node '" + name + "' declared twice");
    }
  }

  for (const auto& [name, node] : dag.nodes_) {
    std::set<std::string> seen;
    for (const auto& arg : node.args) {
      if (!dag.nodes_.contains(arg)) {
        throw Error(ErrorCode::kUnknownArgReference, "node '" + name + "' references unknown arg '" + arg + "'");
      }
      if (!seen.insert(arg).second) {
        throw Error(ErrorCode::kInvalidDag, "node '" + name + "' lists arg '" + arg + "' twice");
      }
    }
  }

  auto cycle = find_cycle(dag.nodes_);
  if (!cycle.empty()) {
    std::ostringstream os;
    for (std::size_t i = 0; i < cycle.size(); ++i) os << (i ? " -> " : "") << cycle[i];
    throw Error(ErrorCode::kCycleDetected, os.str());
  }

  for (const auto& [name, node] : dag.nodes_) {
    if ((node.type == OpType::kPlaceholder || node.type == OpType::kVariable) && !node.args.empty()) {
      throw Error(ErrorCode::kInvalidDag, "leaf node '" + name + "' must not have args");
    }
    if (node.type == OpType::kPlaceholder && node.requires_grad) {
      throw Error(ErrorCode::kInvalidDag, "placeholder '" + name + "' cannot require a gradient");
    }
    dag.users_[name];
    for (const auto& arg : node.args) {
      if (dag.nodes_.at(arg).requires_grad && !node.requires_grad) {
        throw Error(ErrorCode::kInvalidDag, "node '" + name + "' consumes gradient-carrying '" + arg +
                                                "' but does not require a gradient");
      }
      dag.fp_edges_.insert(Edge{arg, name});
      dag.users_[arg].push_back(name);
    }
  }
  for (auto& [name, users] : dag.users_) std::sort(users.begin(), users.end());

  // A DAG without any loss (bare data graphs) may end anywhere; once a loss
  // exists, losses are exactly the sinks.
  bool has_loss = std::any_of(dag.nodes_.begin(), dag.nodes_.end(),
                              [](const auto& kv) { return kv.second.type == OpType::kLossFunction; });
  for (const auto& [name, node] : dag.nodes_) {
    bool sink = dag.users_.at(name).empty();
    bool loss = node.type == OpType::kLossFunction;
    if (sink && !loss && has_loss) throw Error(ErrorCode::kInvalidDag, "node '" + name + "' has no users but is not a loss");
    if (!sink && loss) throw Error(ErrorCode::kInvalidDag, "loss node '" + name + "' must be a sink");
  }
  return dag;
}

std::vector<std::string> topological_order(const OpDag& dag) {
  std::map<std::string, std::size_t> indegree;
  for (const auto& [name, node] : dag.nodes()) indegree[name] = dag.parents(name).size();

  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [name, deg] : indegree) {
    if (deg == 0) ready.push(name);
  }
  std::vector<std::string> order;
  order.reserve(dag.size());
  while (!ready.empty()) {
    std::string name = ready.top();
    ready.pop();
    for (const auto& user : dag.users(name)) {
      if (--indegree[user] == 0) ready.push(user);
    }
    order.push_back(std::move(name));
  }
  return order;
}

std::set<Edge> derive_bp_edges(const OpDag& dag) {
  std::set<Edge> out;
  for (const auto& e : dag.fp_edges()) {
    if (dag.node(e.from).requires_grad) out.insert(Edge{e.to, e.from});
  }
  return out;
}

std::string grad_label(const Edge& fp_edge) { return fp_edge.from + "-" + fp_edge.to; }

void check_assignment(const OpDag& dag, const Assignment& assignment) {
  for (const auto& [name, _] : dag.nodes()) {
    if (!assignment.contains(name)) throw Error(ErrorCode::kUnassignedNode, "node '" + name + "' has no device");
  }
}

std::vector<SubDagBoundary> compute_boundaries(const OpDag& dag, const Assignment& assignment) {
  check_assignment(dag, assignment);
  std::map<DeviceId, SubDagBoundary> by_device;
  for (const auto& [name, _] : dag.nodes()) {
    auto& b = by_device[assignment.at(name)];
    b.device = assignment.at(name);
    b.op_nodes.push_back(name);
  }
  for (const auto& e : dag.fp_edges()) {
    DeviceId src = assignment.at(e.from);
    DeviceId dst = assignment.at(e.to);
    if (src == dst) continue;
    by_device[src].send_acti.push_back(e);
    by_device[dst].required_acti.push_back(e);
    if (dag.node(e.from).requires_grad) {
      by_device[dst].send_grad.push_back(grad_label(e));
      by_device[src].required_grad.push_back(grad_label(e));
    }
  }
  std::vector<SubDagBoundary> out;
  out.reserve(by_device.size());
  for (auto& [_, b] : by_device) out.push_back(std::move(b));
  return out;
}

std::int64_t TensorShape::per_sample_elements() const noexcept {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
}

std::int64_t TensorShape::elements(std::int64_t batch) const noexcept {
  return (batched ? batch : 1) * per_sample_elements();
}

std::int64_t required_attr(const OpNode& node, const std::string& key) {
  auto it = node.attrs.find(key);
  if (it == node.attrs.end()) {
    throw Error(ErrorCode::kMissingShapeAttr, "node '" + node.name + "' (" + node.kind + ") needs attr '" + key + "'");
  }
  return it->second;
}

std::int64_t attr_or(const OpNode& node, const std::string& key, std::int64_t fallback) {
  auto it = node.attrs.find(key);
  return it == node.attrs.end() ? fallback : it->second;
}

namespace {

[[noreturn]] void shape_error(const OpNode& node, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, "node '" + node.name + "' (" + node.kind + "): " + what);
}

void expect_arity(const OpNode& node, const std::vector<TensorShape>& inputs, std::size_t n) {
  if (inputs.size() != n) shape_error(node, "expects " + std::to_string(n) + " inputs");
}

}  // namespace

TensorShape infer_node_shape(const OpNode& node, const std::vector<TensorShape>& inputs) {
  const std::string& kind = node.kind;
  if (node.type == OpType::kPlaceholder) {
    if (kind == "label") return TensorShape{true, {}};
    if (node.shape.empty()) throw Error(ErrorCode::kMissingShapeAttr, "placeholder '" + node.name + "' needs a shape");
    return TensorShape{true, node.shape};
  }
  if (node.type == OpType::kVariable) {
    if (node.shape.empty()) throw Error(ErrorCode::kMissingShapeAttr, "variable '" + node.name + "' needs a shape");
    return TensorShape{false, node.shape};
  }
  if (kind == "linear") {
    expect_arity(node, inputs, 1);
    std::int64_t in = inputs[0].per_sample_elements();
    if (attr_or(node, "in", in) != in) shape_error(node, "attr 'in' does not match input size");
    std::int64_t out = required_attr(node, "out");
    if (out <= 0) shape_error(node, "attr 'out' must be positive");
    return TensorShape{inputs[0].batched, {out}};
  }
  if (kind == "conv2d") {
    expect_arity(node, inputs, 1);
    const auto& d = inputs[0].dims;
    if (d.size() != 3) shape_error(node, "input must be [C, H, W]");
    std::int64_t cin = d[0];
    if (attr_or(node, "in_channels", cin) != cin) shape_error(node, "attr 'in_channels' does not match input");
    std::int64_t cout = required_attr(node, "out_channels");
    std::int64_t k = required_attr(node, "kernel_size");
    std::int64_t stride = attr_or(node, "stride", 1);
    std::int64_t pad = attr_or(node, "padding", 0);
    if (cout <= 0 || k <= 0 || stride <= 0 || pad < 0) shape_error(node, "invalid conv hyperparameters");
    std::int64_t hout = (d[1] + 2 * pad - k) / stride + 1;
    std::int64_t wout = (d[2] + 2 * pad - k) / stride + 1;
    if (d[1] + 2 * pad < k || d[2] + 2 * pad < k) shape_error(node, "kernel larger than padded input");
    return TensorShape{inputs[0].batched, {cout, hout, wout}};
  }
  if (kind == "relu") {
    expect_arity(node, inputs, 1);
    return inputs[0];
  }
  if (kind == "add") {
    if (inputs.size() < 2) shape_error(node, "expects at least 2 inputs");
    TensorShape out = inputs[0];
    for (const auto& s : inputs) {
      if (s.dims != out.dims) shape_error(node, "operand shapes differ");
      out.batched = out.batched || s.batched;
    }
    return out;
  }
  if (kind == "cross_entropy") {
    expect_arity(node, inputs, 2);
    return TensorShape{false, {}};
  }
  throw Error(ErrorCode::kInvalidArgument, "node '" + node.name + "' has unsupported kind '" + kind + "'");
}

std::map<std::string, TensorShape> infer_shapes(const OpDag& dag) {
  std::map<std::string, TensorShape> shapes;
  for (const auto& name : topological_order(dag)) {
    const OpNode& node = dag.node(name);
    std::vector<TensorShape> inputs;
    for (const auto& a : node.args) inputs.push_back(shapes.at(a));
    if (node.kind == "cross_entropy") {
      // One argument must be a label placeholder, the other rank-1 logits.
      int labels = 0;
      for (const auto& a : node.args) labels += dag.node(a).kind == "label";
      if (node.args.size() != 2 || labels != 1) shape_error(node, "needs exactly one label and one logits input");
      for (const auto& a : node.args) {
        if (dag.node(a).kind == "label") continue;
        const auto& logits = shapes.at(a);
        if (logits.dims.size() != 1 || !logits.batched) shape_error(node, "logits must be batched rank-1");
      }
    }
    shapes.emplace(name, infer_node_shape(node, inputs));
  }
  return shapes;
}

}  // namespace geotrain
