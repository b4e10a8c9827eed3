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

// Scenario files: a JSON document describing the operator graph, the device
// network and the run settings.
//
//   {
//     "schema": "geotrain-scenario/1",
//     "name": "example",
//     "dag": [ {"name": "x", "type": "Placeholder", "kind": "input", "shape": [4]},
//              {"name": "fc", "type": "ParametricOp", "kind": "linear",
//               "args": ["x"], "attrs": {"out": 2}}, ... ],
//     "devices": [ {"id": 0, "name": "gpu0", "peak_flops": 1e12,
//                   "lambda": 1.0, "mem_gpu": 8e9}, ... ],
//     "links": { "alpha": [[...], ...], "beta": [[...], ...] },
//     "n_b": 4, "micro_batch_size": 8, "samples": 32,
//     "ratio": 100, "scheduler": "opfence", "compression": "adatopk",
//     "seed": 1, "iterations": 50, "learning_rate": 0.1,
//     "assignment": {"x": 0, "fc": 1}
//   }
//
// Row i / column j of the link matrices describe the link from devices[i]
// to devices[j]; diagonal entries are ignored. "samples", "assignment",
// "iterations" and "learning_rate" are optional. Every problem is reported
// as a SchemaError naming the offending field.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geotrain/costmodel.hpp"
#include "geotrain/opdag.hpp"

namespace geotrain {

inline constexpr const char* kScenarioSchema = "geotrain-scenario/1";

enum class SchedulerKind { kOpFence, kEqualNumber, kEqualCompute, kManual };
enum class CompressionKind { kNone, kUniformTopK, kAdaTopK };

std::string_view to_string(SchedulerKind kind) noexcept;
std::string_view to_string(CompressionKind kind) noexcept;
SchedulerKind parse_scheduler(std::string_view text);
CompressionKind parse_compression(std::string_view text);

struct Scenario {
  std::string name;
  std::vector<OpNode> nodes;
  OpDag dag;
  NetworkGraph network;
  std::int64_t n_b = 1;
  std::int64_t micro_batch_size = 1;
  double samples = 1.0;  // N_s = micro_batch_size * n_b
  double ratio = 100.0;
  SchedulerKind scheduler = SchedulerKind::kOpFence;
  CompressionKind compression = CompressionKind::kNone;
  std::uint64_t seed = 0;
  std::int64_t iterations = 50;
  double learning_rate = 0.1;
  std::optional<Assignment> assignment;
};

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace geotrain
