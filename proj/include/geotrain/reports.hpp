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

// JSON and CSV renderings of schedules, throughput reports and simulator
// traces. All writers are deterministic: keys are sorted and numbers use
// round-trip precision.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "geotrain/compressor.hpp"
#include "geotrain/planner.hpp"
#include "geotrain/scheduler.hpp"
#include "geotrain/simulator.hpp"

namespace geotrain {

nlohmann::json schedule_json(const Schedule& schedule, std::string_view scheduler,
                             const std::optional<CompressionPlan>& compression);

nlohmann::json report_json(const ThroughputReport& report, const StageCosts& stages);

nlohmann::json trace_json(const SimTrace& trace);

/// Chrome trace-event format ("X" complete events, microseconds). Compute
/// runs on one track per device; each directed link gets its own track.
nlohmann::json chrome_trace_json(const SimTrace& trace);

/// %.17g, the shortest format that always round-trips a double.
std::string format_double(double value);

void write_text(const std::filesystem::path& path, std::string_view text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace geotrain
