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

// The plan / simulate / run / bench pipelines behind the command-line tool.
// Each command reads a scenario, writes its report files into an output
// directory and returns the computed values.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotrain/compressor.hpp"
#include "geotrain/planner.hpp"
#include "geotrain/scenario.hpp"
#include "geotrain/scheduler.hpp"
#include "geotrain/simulator.hpp"

namespace geotrain {

struct CommandOptions {
  std::filesystem::path scenario;  // file, or directory for bench
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<SchedulerKind> scheduler;
  std::optional<CompressionKind> compression;
  std::vector<double> ratios;  // simulate sweeps all of them; other commands take at most one
  std::optional<std::int64_t> iterations;
};

/// Applies command-line overrides (seed, scheduler, compression, one ratio).
void apply_overrides(Scenario& scenario, const CommandOptions& options);

struct PlanOutcome {
  Schedule schedule;
  CostTable costs;
  StageCosts stages;
  std::optional<CompressionPlan> compression;  // empty for "none" or when nothing crosses devices
  ThroughputReport report;
};

Schedule schedule_scenario(const Scenario& scenario, const CostTable& costs);

std::optional<CompressionPlan> make_compression_plan(CompressionKind kind, double ratio, const OpDag& dag,
                                                     const Assignment& assignment, const NetworkGraph& network,
                                                     const CostTable& costs);

PlanOutcome plan_scenario(const Scenario& scenario);

PlanOutcome cmd_plan(const CommandOptions& options);

struct SweepRow {
  double ratio = 1.0;
  double fp_makespan = 0.0;
  double makespan = 0.0;
  double analytic = 0.0;
  double gap = 0.0;
};

struct SimulateOutcome {
  PlanOutcome plan;  // for the first ratio
  SimTrace trace;    // for the first ratio
  std::vector<SweepRow> sweep;
};

SimulateOutcome cmd_simulate(const CommandOptions& options);

struct RunOutcome {
  std::map<CompressionKind, std::vector<double>> losses;  // per iteration, before the update
};

RunOutcome run_scenario(const Scenario& scenario);
RunOutcome cmd_run(const CommandOptions& options);

struct BenchCell {
  std::string scenario;
  SchedulerKind scheduler = SchedulerKind::kOpFence;
  CompressionKind compression = CompressionKind::kNone;
  double ratio = 1.0;
  std::string status = "ok";  // "ok" or the error name
  double simulated = 0.0;     // full FP + BP makespan
  double predicted = 0.0;
};

std::vector<BenchCell> bench_scenario(const Scenario& scenario);
std::vector<BenchCell> cmd_bench(const CommandOptions& options);

}  // namespace geotrain
