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

#include "geotrain/commands.hpp"

#include <algorithm>
#include <memory>
#include <sstream>

#include <spdlog/spdlog.h>

#include "geotrain/error.hpp"
#include "geotrain/executor.hpp"
#include "geotrain/reports.hpp"

namespace geotrain {

namespace {

// Messages go to the "geotrain" logger when the host program registered
// one; otherwise they are dropped.
std::shared_ptr<spdlog::logger> logger() {
  if (auto registered = spdlog::get("geotrain")) return registered;
  static auto silent = std::make_shared<spdlog::logger>("geotrain-silent");
  return silent;
}

constexpr CompressionKind kAllCompressions[] = {CompressionKind::kNone, CompressionKind::kUniformTopK,
                                                CompressionKind::kAdaTopK};
constexpr SchedulerKind kBenchSchedulers[] = {SchedulerKind::kOpFence, SchedulerKind::kEqualNumber,
                                              SchedulerKind::kEqualCompute};

Scenario load_with_overrides(const CommandOptions& options) {
  Scenario s = load_scenario(options.scenario);
  apply_overrides(s, options);
  return s;
}

void require_single_ratio(const CommandOptions& options, const char* command) {
  if (options.ratios.size() > 1) {
    throw Error(ErrorCode::kInvalidArgument, std::string(command) + " takes at most one --ratio");
  }
}

}  // namespace

void apply_overrides(Scenario& scenario, const CommandOptions& options) {
  if (options.seed) scenario.seed = *options.seed;
  if (options.scheduler) {
    if (*options.scheduler == SchedulerKind::kManual && !scenario.assignment) {
      throw Error(ErrorCode::kSchemaError, "field 'assignment': required by the manual scheduler");
    }
    scenario.scheduler = *options.scheduler;
  }
  if (options.compression) scenario.compression = *options.compression;
  if (!options.ratios.empty()) {
    if (!(options.ratios.front() >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "--ratio must be >= 1");
    scenario.ratio = options.ratios.front();
  }
  if (options.iterations) {
    if (*options.iterations < 1) throw Error(ErrorCode::kInvalidArgument, "--iterations must be >= 1");
    scenario.iterations = *options.iterations;
  }
}

Schedule schedule_scenario(const Scenario& scenario, const CostTable& costs) {
  auto ids = scenario.network.device_ids();
  Schedule schedule;
  switch (scenario.scheduler) {
    case SchedulerKind::kOpFence:
      return opfence_schedule(scenario.dag, scenario.network, costs,
                              {.n_b = scenario.n_b, .seed = scenario.seed, .samples = scenario.samples});
    case SchedulerKind::kEqualNumber:
      schedule = baseline_equal_number(scenario.dag, ids);
      break;
    case SchedulerKind::kEqualCompute:
      schedule = baseline_equal_compute(scenario.dag, ids, costs);
      break;
    case SchedulerKind::kManual:
      schedule.assignment = scenario.assignment.value();
      schedule.cluster_order.push_back(ids);
      break;
  }
  annotate_schedule(schedule, scenario.dag, scenario.network, costs, scenario.n_b, scenario.samples);
  return schedule;
}

std::optional<CompressionPlan> make_compression_plan(CompressionKind kind, double ratio, const OpDag& dag,
                                                     const Assignment& assignment, const NetworkGraph& network,
                                                     const CostTable& costs) {
  if (kind == CompressionKind::kNone) return std::nullopt;
  auto times = link_comm_times(dag, assignment, network, costs);
  bool traffic = std::any_of(times.begin(), times.end(), [](const auto& kv) { return kv.second > 0.0; });
  if (!traffic) return std::nullopt;
  return kind == CompressionKind::kAdaTopK ? adatopk_plan(times, ratio) : uniform_plan(times, ratio);
}

PlanOutcome plan_scenario(const Scenario& scenario) {
  PlanOutcome out;
  out.costs = estimate_costs(scenario.dag, scenario.micro_batch_size);
  out.schedule = schedule_scenario(scenario, out.costs);
  out.stages = stage_costs(scenario.dag, out.schedule.assignment, scenario.network, out.costs);
  out.compression = make_compression_plan(scenario.compression, scenario.ratio, scenario.dag, out.schedule.assignment,
                                          scenario.network, out.costs);
  std::optional<LinkCompression> link;
  if (out.compression) link = LinkCompression{out.compression->base_ratio, out.compression->link_ratios};
  out.report = evaluate(scenario.dag, out.schedule.assignment, scenario.network, out.costs, scenario.n_b,
                        scenario.samples, link);
  out.schedule.predicted = out.report;
  return out;
}

namespace {

nlohmann::json plan_report(const Scenario& scenario, const PlanOutcome& plan) {
  auto doc = report_json(plan.report, plan.stages);
  doc["scenario"] = scenario.name;
  doc["scheduler"] = to_string(scenario.scheduler);
  doc["compression"] = to_string(scenario.compression);
  doc["ratio"] = scenario.ratio;
  doc["seed"] = scenario.seed;
  return doc;
}

}  // namespace

PlanOutcome cmd_plan(const CommandOptions& options) {
  require_single_ratio(options, "plan");
  Scenario scenario = load_with_overrides(options);
  logger()->info("plan: scenario '{}' with {} ops on {} devices, scheduler {}", scenario.name, scenario.dag.size(),
               scenario.network.size(), to_string(scenario.scheduler));
  PlanOutcome plan = plan_scenario(scenario);
  write_json(options.out / "schedule.json",
             schedule_json(plan.schedule, to_string(scenario.scheduler), plan.compression));
  write_json(options.out / "report.json", plan_report(scenario, plan));
  write_text(options.out / "report.csv", report_csv_header() + "\n" + report_csv_row(plan.report) + "\n");
  logger()->info("plan: pipeline time {:.6g} s, compressed {:.6g} s", plan.report.pipeline_time,
               plan.report.compressed_pipeline_time);
  return plan;
}

SimulateOutcome cmd_simulate(const CommandOptions& options) {
  Scenario scenario = load_with_overrides(options);
  std::vector<double> ratios = options.ratios.empty() ? std::vector<double>{scenario.ratio} : options.ratios;
  SimulateOutcome out;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "--ratio must be >= 1");
    scenario.ratio = ratios[i];
    PlanOutcome plan = plan_scenario(scenario);
    SimTrace trace = simulate(scenario.dag, plan.schedule.assignment, plan.costs, scenario.network, scenario.n_b,
                              plan.compression);
    SweepRow row;
    row.ratio = ratios[i];
    row.fp_makespan = trace.fp_makespan;
    row.makespan = trace.makespan;
    row.analytic = trace.compressed ? plan.report.compressed_pipeline_time : plan.report.pipeline_time;
    row.gap = analytic_gap(trace, plan.report);
    logger()->info("simulate: ratio {} makespan {:.6g} s (forward {:.6g} s, analytic {:.6g} s, gap {:.3g})", row.ratio,
                 row.makespan, row.fp_makespan, row.analytic, row.gap);
    out.sweep.push_back(row);
    if (i == 0) {
      out.plan = std::move(plan);
      out.trace = std::move(trace);
    }
  }
  write_json(options.out / "schedule.json",
             schedule_json(out.plan.schedule, to_string(scenario.scheduler), out.plan.compression));
  write_json(options.out / "trace.json", trace_json(out.trace));
  write_json(options.out / "timeline.json", chrome_trace_json(out.trace));
  std::ostringstream csv;
  csv << "ratio,fp_makespan,makespan,analytic_pipeline_time,gap\n";
  for (const auto& r : out.sweep) {
    csv << format_double(r.ratio) << ',' << format_double(r.fp_makespan) << ',' << format_double(r.makespan) << ','
        << format_double(r.analytic) << ',' << format_double(r.gap) << '\n';
  }
  write_text(options.out / "gap.csv", csv.str());
  return out;
}

RunOutcome run_scenario(const Scenario& scenario) {
  CostTable costs = estimate_costs(scenario.dag, scenario.micro_batch_size);
  Schedule schedule = schedule_scenario(scenario, costs);
  Batch batch = synthetic_batch(scenario.dag, scenario.micro_batch_size * scenario.n_b, scenario.seed);
  OptimizerConfig optimizer;
  optimizer.learning_rate = scenario.learning_rate;

  RunOutcome out;
  for (CompressionKind kind : kAllCompressions) {
    auto plan = make_compression_plan(kind, scenario.ratio, scenario.dag, schedule.assignment, scenario.network, costs);
    Runtime runtime(scenario.dag, schedule.assignment, {.seed = scenario.seed});
    auto& losses = out.losses[kind];
    for (std::int64_t it = 0; it < scenario.iterations; ++it) {
      losses.push_back(runtime.run_iteration(batch, scenario.n_b, plan, optimizer).mean_loss());
    }
    logger()->info("run: {} loss {:.6g} -> {:.6g}", to_string(kind), losses.front(), losses.back());
  }
  return out;
}

RunOutcome cmd_run(const CommandOptions& options) {
  require_single_ratio(options, "run");
  Scenario scenario = load_with_overrides(options);
  RunOutcome out = run_scenario(scenario);
  std::ostringstream csv;
  csv << "iteration";
  for (auto kind : kAllCompressions) csv << ',' << to_string(kind);
  csv << '\n';
  for (std::int64_t it = 0; it < scenario.iterations; ++it) {
    csv << it;
    for (auto kind : kAllCompressions) csv << ',' << format_double(out.losses.at(kind)[static_cast<std::size_t>(it)]);
    csv << '\n';
  }
  write_text(options.out / "loss.csv", csv.str());
  return out;
}

std::vector<BenchCell> bench_scenario(const Scenario& base) {
  std::vector<BenchCell> cells;
  for (SchedulerKind scheduler : kBenchSchedulers) {
    for (CompressionKind compression : kAllCompressions) {
      Scenario s = base;
      s.scheduler = scheduler;
      s.compression = compression;
      BenchCell cell{.scenario = s.name, .scheduler = scheduler, .compression = compression, .ratio = s.ratio};
      try {
        PlanOutcome plan = plan_scenario(s);
        SimTrace trace = simulate(s.dag, plan.schedule.assignment, plan.costs, s.network, s.n_b, plan.compression);
        cell.simulated = trace.makespan;
        cell.predicted = plan.report.compressed_pipeline_time;
      } catch (const Error& e) {
        cell.status = std::string(to_string(e.code()));
        logger()->warn("bench: {} / {} / {} failed: {}", s.name, to_string(scheduler), to_string(compression), e.what());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<BenchCell> cmd_bench(const CommandOptions& options) {
  require_single_ratio(options, "bench");
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(options.scenario)) {
    for (const auto& entry : std::filesystem::directory_iterator(options.scenario)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(options.scenario);
  }
  if (files.empty()) throw Error(ErrorCode::kInvalidArgument, "no scenario files in '" + options.scenario.string() + "'");

  std::vector<BenchCell> cells;
  for (const auto& file : files) {
    CommandOptions one = options;
    one.scenario = file;
    try {
      Scenario s = load_with_overrides(one);
      auto part = bench_scenario(s);
      cells.insert(cells.end(), part.begin(), part.end());
    } catch (const Error& e) {
      logger()->warn("bench: skipping '{}': {}", file.string(), e.what());
      for (SchedulerKind scheduler : kBenchSchedulers) {
        for (CompressionKind compression : kAllCompressions) {
          cells.push_back({.scenario = file.stem().string(), .scheduler = scheduler, .compression = compression,
                           .ratio = options.ratios.empty() ? 0.0 : options.ratios.front(),
                           .status = std::string(to_string(e.code()))});
        }
      }
    }
  }
  std::ostringstream csv;
  csv << "scenario,scheduler,compression,ratio,status,simulated_latency,predicted_time\n";
  for (const auto& c : cells) {
    csv << c.scenario << ',' << to_string(c.scheduler) << ',' << to_string(c.compression) << ','
        << format_double(c.ratio) << ',' << c.status << ',';
    if (c.status == "ok") csv << format_double(c.simulated) << ',' << format_double(c.predicted);
    else csv << ',';
    csv << '\n';
  }
  write_text(options.out / "bench.csv", csv.str());
  return cells;
}

}  // namespace geotrain
