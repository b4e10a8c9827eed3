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

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "geotrain/commands.hpp"
#include "geotrain/error.hpp"

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("geotrain");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("OPFENCE_LOG"); env && *env) {
    auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("OPFENCE_LOG='{}' is not a level (trace, debug, info, warn, error, critical, off)", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

int exit_code(geotrain::ErrorCode code) {
  using geotrain::ErrorCode;
  switch (code) {
    case ErrorCode::kSchemaError: return 2;
    case ErrorCode::kInfeasibleMemory: return 3;
    case ErrorCode::kDeadlock: return 4;
    case ErrorCode::kNonFiniteLoss: return 5;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Plan, simulate and execute pipeline-parallel training over heterogeneous devices"};
  app.require_subcommand(1);

  geotrain::CommandOptions options;
  std::string scheduler;
  std::string compression;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;

  auto add_common = [&](CLI::App* cmd, const char* scenario_help) {
    cmd->add_option("--scenario", options.scenario, scenario_help)->required();
    cmd->add_option("--out", options.out, "Output directory")->default_val(".");
    cmd->add_option("--seed", seed, "Override the scenario seed");
    cmd->add_option("--scheduler", scheduler, "opfence, equal_number, equal_compute or manual");
    cmd->add_option("--compression", compression, "none, uniform_topk or adatopk");
    cmd->add_option("--ratio", options.ratios, "Base compression ratio (simulate accepts several)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
  };
  auto* plan = app.add_subcommand("plan", "Schedule the DAG and write schedule.json and report.{json,csv}");
  add_common(plan, "Scenario JSON file");
  auto* simulate = app.add_subcommand("simulate", "Simulate one iteration; writes trace.json, timeline.json, gap.csv");
  add_common(simulate, "Scenario JSON file");
  auto* run = app.add_subcommand("run", "Train on synthetic data under each compression mode; writes loss.csv");
  add_common(run, "Scenario JSON file");
  run->add_option("--iterations", iterations, "Override the scenario iteration count")->check(CLI::PositiveNumber);
  auto* bench = app.add_subcommand("bench", "Scheduler x compression matrix over scenarios; writes bench.csv");
  add_common(bench, "Scenario JSON file or directory of them");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.get_subcommands().front()->count("--seed")) options.seed = seed;
    if (!scheduler.empty()) options.scheduler = geotrain::parse_scheduler(scheduler);
    if (!compression.empty()) options.compression = geotrain::parse_compression(compression);
    if (run->parsed() && run->count("--iterations")) options.iterations = iterations;

    if (plan->parsed()) {
      geotrain::cmd_plan(options);
    } else if (simulate->parsed()) {
      geotrain::cmd_simulate(options);
    } else if (run->parsed()) {
      geotrain::cmd_run(options);
    } else {
      geotrain::cmd_bench(options);
    }
  } catch (const geotrain::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
