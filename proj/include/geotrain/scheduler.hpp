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

// OP-Fence placement plus the two baseline partitioners.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "geotrain/costmodel.hpp"
#include "geotrain/louvain.hpp"
#include "geotrain/opdag.hpp"
#include "geotrain/planner.hpp"

namespace geotrain {

struct Schedule {
  Assignment assignment;
  std::vector<std::vector<DeviceId>> cluster_order;  // pipeline order; devices in chain order
  std::map<DeviceId, double> per_device_mem;         // estimated GPU bytes
  double modularity = 0.0;
  std::optional<ThroughputReport> predicted;
};

/// Parameters + gradient buffers + n_b retained activations.
double estimate_subdag_memory(std::span<const std::string> nodes, const CostTable& costs, std::int64_t n_b);

/// Block sizes of the ordered partition of weights into speeds.size()
/// contiguous blocks minimizing max_b sum(block)/speed_b. Among optimal
/// partitions, earlier blocks are made as large as possible.
std::vector<std::size_t> min_max_chain_partition(std::span<const double> weights, std::span<const double> speeds);

struct OpFenceOptions {
  std::int64_t n_b = 1;
  std::uint64_t seed = 0;
  double samples = 0.0;  // N_s for the predicted throughput
};

Schedule opfence_schedule(const OpDag& dag, const NetworkGraph& network, const CostTable& costs,
                          const OpFenceOptions& options);

/// Topological order in |devices| near-equal contiguous blocks, the
/// remainder spread one per block from the front.
Schedule baseline_equal_number(const OpDag& dag, std::span<const DeviceId> devices);

/// Contiguous split of the topological order minimizing the largest block FLOPs.
Schedule baseline_equal_compute(const OpDag& dag, std::span<const DeviceId> devices, const CostTable& costs);

/// True when every device's nodes induce a weakly connected FP subgraph.
bool devices_weakly_connected(const OpDag& dag, const Assignment& assignment);

/// Fills per_device_mem and the predicted report for a schedule.
void annotate_schedule(Schedule& schedule, const OpDag& dag, const NetworkGraph& network, const CostTable& costs,
                       std::int64_t n_b, double samples);

}  // namespace geotrain
