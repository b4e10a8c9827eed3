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

#include "geotrain/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geotrain/error.hpp"

namespace geotrain {

NetworkGraph::NetworkGraph(std::vector<DeviceProfile> devices, std::vector<LinkProfile> links)
    : devices_(std::move(devices)) {
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    const auto& d = devices_[i];
    if (!index_.emplace(d.id, i).second) {
      throw Error(ErrorCode::kDuplicateName, "device id " + std::to_string(d.id) + " declared twice");
    }
    if (!(d.peak_flops > 0.0)) throw Error(ErrorCode::kInvalidArgument, "device " + std::to_string(d.id) + ": peak_flops must be > 0");
    if (!(d.lambda > 0.0 && d.lambda <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "device " + std::to_string(d.id) + ": lambda must be in (0, 1]");
    }
    if (d.mem_gpu < 0 || d.mem_cpu < 0 || d.mem_disk < 0) {
      throw Error(ErrorCode::kInvalidArgument, "device " + std::to_string(d.id) + ": negative memory budget");
    }
  }
  for (const auto& l : links) {
    if (!index_.contains(l.src) || !index_.contains(l.dst)) {
      throw Error(ErrorCode::kInvalidArgument, "link references an undeclared device");
    }
    if (l.src == l.dst) continue;
    if (!(l.alpha >= 0.0) || !(l.beta > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "link " + std::to_string(l.src) + "->" + std::to_string(l.dst) +
                                                   ": need alpha >= 0 and beta > 0");
    }
    links_[{l.src, l.dst}] = l;
  }
  for (const auto& a : devices_) {
    for (const auto& b : devices_) {
      if (a.id != b.id && !links_.contains({a.id, b.id})) {
        throw Error(ErrorCode::kInvalidArgument,
                    "missing link " + std::to_string(a.id) + "->" + std::to_string(b.id));
      }
    }
  }
}

const DeviceProfile& NetworkGraph::device(DeviceId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown device " + std::to_string(id));
  return devices_[it->second];
}

bool NetworkGraph::has_device(DeviceId id) const noexcept { return index_.contains(id); }

const LinkProfile& NetworkGraph::link(DeviceId src, DeviceId dst) const {
  auto it = links_.find({src, dst});
  if (it == links_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no link " + std::to_string(src) + "->" + std::to_string(dst));
  }
  return it->second;
}

std::vector<DeviceId> NetworkGraph::device_ids() const {
  std::vector<DeviceId> ids;
  for (const auto& [id, _] : index_) ids.push_back(id);
  return ids;
}

OpCost estimate_op_cost(const OpNode& node, const std::vector<TensorShape>& input_shapes,
                        std::int64_t micro_batch_size) {
  const double b = static_cast<double>(micro_batch_size);
  OpCost cost;
  auto rows = [&](bool batched) { return batched ? b : 1.0; };

  if (node.kind == "linear") {
    // Attr-only form lets callers cost a layer without materializing inputs.
    bool batched = input_shapes.empty() || input_shapes[0].batched;
    double in = input_shapes.empty() ? static_cast<double>(required_attr(node, "in"))
                                     : static_cast<double>(attr_or(node, "in", input_shapes[0].per_sample_elements()));
    double out = static_cast<double>(required_attr(node, "out"));
    cost.flops = 2.0 * rows(batched) * in * out;
    cost.out_bytes = rows(batched) * out * kElementBytes;
    cost.param_bytes = (in * out + out) * kElementBytes;
  } else if (node.type == OpType::kLossFunction) {
    TensorShape out = infer_node_shape(node, input_shapes);
    (void)out;
    double classes = 0.0;
    bool batched = true;
    for (const auto& s : input_shapes) {
      if (!s.dims.empty()) {
        classes = static_cast<double>(s.per_sample_elements());
        batched = s.batched;
      }
    }
    cost.flops = 5.0 * rows(batched) * classes;
    cost.out_bytes = kElementBytes;
  } else {
    TensorShape out = infer_node_shape(node, input_shapes);
    double elems = static_cast<double>(out.elements(micro_batch_size));
    cost.out_bytes = elems * kElementBytes;
    if (node.kind == "conv2d") {
      double cin = static_cast<double>(input_shapes.at(0).dims.at(0));
      double k = static_cast<double>(required_attr(node, "kernel_size"));
      double cout = static_cast<double>(out.dims[0]);
      // 2 * B * Cout * Hout * Wout * Cin * k^2 == 2 * elems * Cin * k^2
      cost.flops = 2.0 * elems * cin * k * k;
      cost.param_bytes = (cout * cin * k * k + cout) * kElementBytes;
    } else if (node.kind == "relu" || node.kind == "add") {
      cost.flops = elems;
    } else if (node.type == OpType::kVariable) {
      cost.param_bytes = cost.out_bytes;
    }
  }
  cost.acti_bytes = node.type == OpType::kVariable ? 0.0 : cost.out_bytes;
  return cost;
}

CostTable estimate_costs(const OpDag& dag, std::int64_t micro_batch_size) {
  if (micro_batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "micro_batch_size must be >= 1");
  auto shapes = infer_shapes(dag);
  CostTable table;
  for (const auto& [name, node] : dag.nodes()) {
    std::vector<TensorShape> inputs;
    for (const auto& a : node.args) inputs.push_back(shapes.at(a));
    table.emplace(name, estimate_op_cost(node, inputs, micro_batch_size));
  }
  return table;
}

double compute_time(double flops, const DeviceProfile& device) { return flops / device.effective_flops(); }

double comm_time(const LinkProfile& link, double message_bytes) {
  if (link.src == link.dst) return 0.0;
  return link.alpha + link.beta * message_bytes;
}

double comm_time(const NetworkGraph& network, DeviceId src, DeviceId dst, double message_bytes) {
  if (src == dst) return 0.0;
  return comm_time(network.link(src, dst), message_bytes);
}

OpTime op_time(const OpDag& dag, const std::string& name, const CostTable& costs, const Assignment& assignment,
               const NetworkGraph& network) {
  auto where = [&](const std::string& n) {
    auto it = assignment.find(n);
    if (it == assignment.end()) throw Error(ErrorCode::kUnassignedNode, "node '" + n + "' has no device");
    return it->second;
  };
  DeviceId here = where(name);
  OpTime t;
  t.compute = compute_time(costs.at(name), network.device(here));
  for (const auto& parent : dag.parents(name)) {
    t.read += comm_time(network, where(parent), here, costs.at(parent).out_bytes);
  }
  return t;
}

double fit_lambda(std::span<const ProfileSample> samples, const DeviceProfile& device) {
  if (samples.size() < 2) throw Error(ErrorCode::kInsufficientSamples, "need at least 2 samples");
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    if (!(s.seconds > 0.0) || !(s.flops >= 0.0)) {
      throw Error(ErrorCode::kInsufficientSamples, "samples need positive time and non-negative flops");
    }
    double x = s.flops / device.peak_flops;
    sxx += x * x;
    sxy += x * s.seconds;
  }
  if (sxx == 0.0) throw Error(ErrorCode::kDegenerateFit, "all samples have zero flops");
  // seconds = x / lambda, fitted as seconds = c * x with c = sxy / sxx.
  double lambda = sxx / sxy;
  return std::min(lambda, 1.0);
}

std::vector<ProfileSample> load_profile_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path.string());
  std::vector<ProfileSample> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    ProfileSample s;
    if (!(row >> s.flops >> s.seconds)) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(ErrorCode::kSchemaError, path.string() + ": malformed row '" + line + "'");
    }
    first = false;
    out.push_back(s);
  }
  return out;
}

}  // namespace geotrain
