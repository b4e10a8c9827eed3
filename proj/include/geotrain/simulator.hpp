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

// Discrete-event simulation of one GPipe-style training iteration.
//
// Resource rules: a device runs one operator task at a time; a directed link
// carries one message at a time in FIFO order. FP tasks of every
// micro-batch complete before any BP task starts. Ready tasks on a device
// are picked by (phase, micro-batch, op name).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotrain/compressor.hpp"
#include "geotrain/costmodel.hpp"
#include "geotrain/opdag.hpp"
#include "geotrain/planner.hpp"

namespace geotrain {

enum class Phase { kForward, kBackward };
enum class EventKind { kOpStart, kOpFinish, kMsgSend, kMsgArrive };

std::string_view to_string(Phase phase) noexcept;
std::string_view to_string(EventKind kind) noexcept;

struct SimEvent {
  double time = 0.0;
  EventKind kind = EventKind::kOpStart;
  Phase phase = Phase::kForward;
  std::string ref;       // op name, or "producer->device" / grad label for messages
  std::int64_t micro_batch = 0;
  DeviceId device = 0;   // executing device, or link source
  DeviceId peer = 0;     // link destination (messages only)
  double bytes = 0.0;    // messages only
};

struct SimTrace {
  std::vector<SimEvent> events;  // ordered by time, then processing order
  double makespan = 0.0;         // last event of the iteration (FP + BP)
  double fp_makespan = 0.0;      // last forward-phase event
  std::map<DeviceId, double> fp_busy;
  std::map<DeviceId, double> bp_busy;
  std::map<LinkKey, double> link_bytes;
  std::int64_t n_b = 1;
  bool compressed = false;

  double busy(DeviceId d) const;
};

SimTrace simulate(const OpDag& dag, const Assignment& assignment, const CostTable& costs, const NetworkGraph& network,
                  std::int64_t n_b, const std::optional<CompressionPlan>& compression = std::nullopt);

/// |simulated - analytic| / simulated for the pipelined FP time. The
/// compressed analytic time is used when the trace was compressed.
double analytic_gap(const SimTrace& trace, const ThroughputReport& report);

}  // namespace geotrain
