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

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geotrain/opdag.hpp"

namespace geotrain {

/// Bytes per activation/gradient element on the wire.
inline constexpr std::int64_t kElementBytes = 4;

struct DeviceProfile {
  DeviceId id = 0;
  std::string name;
  double peak_flops = 0.0;  // S*, FLOP/s
  double lambda = 1.0;      // fitted scaling factor in (0, 1]
  double mem_gpu = std::numeric_limits<double>::infinity();
  double mem_cpu = std::numeric_limits<double>::infinity();
  double mem_disk = std::numeric_limits<double>::infinity();

  double effective_flops() const noexcept { return lambda * peak_flops; }
};

struct LinkProfile {
  DeviceId src = 0;
  DeviceId dst = 0;
  double alpha = 0.0;  // seconds
  double beta = 0.0;   // seconds per byte
};

using LinkKey = std::pair<DeviceId, DeviceId>;

class NetworkGraph {
 public:
  NetworkGraph() = default;
  /// Validates profiles and requires a link for every ordered pair of
  /// distinct devices.
  NetworkGraph(std::vector<DeviceProfile> devices, std::vector<LinkProfile> links);

  const std::vector<DeviceProfile>& devices() const noexcept { return devices_; }
  const std::map<LinkKey, LinkProfile>& links() const noexcept { return links_; }
  std::size_t size() const noexcept { return devices_.size(); }

  const DeviceProfile& device(DeviceId id) const;
  bool has_device(DeviceId id) const noexcept;
  const LinkProfile& link(DeviceId src, DeviceId dst) const;
  std::vector<DeviceId> device_ids() const;

 private:
  std::vector<DeviceProfile> devices_;
  std::map<DeviceId, std::size_t> index_;
  std::map<LinkKey, LinkProfile> links_;
};

/// Per-operator cost for one micro-batch. Backward FLOPs are 2x forward.
struct OpCost {
  double flops = 0.0;
  double out_bytes = 0.0;
  double param_bytes = 0.0;
  double acti_bytes = 0.0;

  double bp_flops() const noexcept { return 2.0 * flops; }
};

using CostTable = std::map<std::string, OpCost>;

OpCost estimate_op_cost(const OpNode& node, const std::vector<TensorShape>& input_shapes,
                        std::int64_t micro_batch_size);

/// Cost of every node of a DAG (runs shape inference).
CostTable estimate_costs(const OpDag& dag, std::int64_t micro_batch_size);

double compute_time(double flops, const DeviceProfile& device);
inline double compute_time(const OpCost& cost, const DeviceProfile& device) {
  return compute_time(cost.flops, device);
}

/// Alpha-beta message time. Self-links cost nothing.
double comm_time(const LinkProfile& link, double message_bytes);
double comm_time(const NetworkGraph& network, DeviceId src, DeviceId dst, double message_bytes);

/// Read / compute / write breakdown of a single operator on its device.
struct OpTime {
  double read = 0.0;
  double compute = 0.0;
  double write = 0.0;  // local IO is not modeled

  double total() const noexcept { return read + compute + write; }
};

OpTime op_time(const OpDag& dag, const std::string& name, const CostTable& costs,
               const Assignment& assignment, const NetworkGraph& network);

inline double op_total_time(const OpDag& dag, const std::string& name, const CostTable& costs,
                            const Assignment& assignment, const NetworkGraph& network) {
  return op_time(dag, name, costs, assignment, network).total();
}

struct ProfileSample {
  double flops = 0.0;
  double seconds = 0.0;
};

/// Least-squares fit of seconds ~ flops / (lambda * S*), clamped to (0, 1].
double fit_lambda(std::span<const ProfileSample> samples, const DeviceProfile& device);

/// Reads "flops,seconds" rows; a non-numeric first line is treated as a header.
std::vector<ProfileSample> load_profile_samples_csv(const std::filesystem::path& path);

}  // namespace geotrain
