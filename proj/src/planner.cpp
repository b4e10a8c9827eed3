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

#include "geotrain/planner.hpp"

#include <algorithm>
#include <cstdio>

#include "geotrain/error.hpp"

namespace geotrain {

StageCosts make_stage_costs(std::vector<double> compute, std::vector<double> receive) {
  if (compute.size() != receive.size()) throw Error(ErrorCode::kInvalidArgument, "C and R differ in length");
  StageCosts s;
  for (std::size_t i = 0; i < compute.size(); ++i) s.devices.push_back(static_cast<DeviceId>(i));
  s.compute = std::move(compute);
  s.receive = std::move(receive);
  return s;
}

StageCosts stage_costs(const OpDag& dag, const Assignment& assignment, const NetworkGraph& network,
                       const CostTable& costs) {
  check_assignment(dag, assignment);
  StageCosts s;
  s.devices = network.device_ids();
  s.compute.assign(s.size(), 0.0);
  s.receive.assign(s.size(), 0.0);
  std::map<DeviceId, std::size_t> index;
  for (std::size_t i = 0; i < s.size(); ++i) index[s.devices[i]] = i;

  for (const auto& [name, node] : dag.nodes()) {
    DeviceId p = assignment.at(name);
    if (!index.contains(p)) throw Error(ErrorCode::kInvalidArgument, "node '" + name + "' on unknown device");
    auto t = op_time(dag, name, costs, assignment, network);
    s.compute[index[p]] += t.compute;
    s.receive[index[p]] += t.read;
  }
  return s;
}

std::map<LinkKey, double> link_comm_times(const OpDag& dag, const Assignment& assignment,
                                          const NetworkGraph& network, const CostTable& costs) {
  check_assignment(dag, assignment);
  std::map<LinkKey, double> out;
  for (const auto& e : dag.fp_edges()) {
    DeviceId src = assignment.at(e.from);
    DeviceId dst = assignment.at(e.to);
    if (src == dst) continue;
    out[{src, dst}] += comm_time(network, src, dst, costs.at(e.from).out_bytes);
  }
  return out;
}

double latency_fp(const StageCosts& stages) {
  double sum = 0.0;
  for (std::size_t i = 0; i < stages.size(); ++i) sum += stages.total(i);
  return sum;
}

std::size_t bottleneck_index(const StageCosts& stages) {
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    double v = std::max(stages.compute[i], stages.receive[i]);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

namespace {

double bottleneck_value(const StageCosts& stages) {
  if (stages.size() == 0) return 0.0;
  std::size_t i = bottleneck_index(stages);
  return std::max(stages.compute[i], stages.receive[i]);
}

}  // namespace

double pipeline_time(const StageCosts& stages, std::int64_t n_b) {
  if (n_b < 1) throw Error(ErrorCode::kInvalidMicroBatchCount, "n_b must be >= 1, got " + std::to_string(n_b));
  return latency_fp(stages) + static_cast<double>(n_b - 1) * bottleneck_value(stages);
}

double throughput(double samples, double pipeline_seconds) {
  if (!(pipeline_seconds > 0.0)) throw Error(ErrorCode::kZeroTime, "pipeline time must be positive");
  return samples / pipeline_seconds;
}

double compressed_pipeline_time(const StageCosts& stages, std::int64_t n_b, double base_ratio,
                                const std::vector<double>& device_ratios, CompressedTimeOptions options) {
  if (n_b < 1) throw Error(ErrorCode::kInvalidMicroBatchCount, "n_b must be >= 1, got " + std::to_string(n_b));
  if (!(base_ratio >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "base ratio must be >= 1");
  if (device_ratios.size() != stages.size()) throw Error(ErrorCode::kInvalidRatio, "one ratio per device required");
  for (double r : device_ratios) {
    if (!(r >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "per-device ratios must be >= 1");
  }
  double first = 0.0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    first += stages.compute[i] + 3.0 * stages.receive[i] / device_ratios[i];
  }
  double bottleneck = 0.0;
  if (options.compute_aware_bottleneck) {
    for (std::size_t i = 0; i < stages.size(); ++i) {
      bottleneck = std::max(bottleneck, std::max(stages.compute[i], 3.0 * stages.receive[i] / device_ratios[i]));
    }
  } else {
    bottleneck = 3.0 * bottleneck_value(stages) / base_ratio;
  }
  return first + static_cast<double>(n_b - 1) * bottleneck;
}

std::vector<double> device_ratios_from_links(const StageCosts& stages, const std::map<LinkKey, double>& link_times,
                                             const std::map<LinkKey, double>& link_ratios, double base_ratio) {
  std::vector<double> out(stages.size(), std::max(1.0, 3.0 * base_ratio));
  for (std::size_t i = 0; i < stages.size(); ++i) {
    double raw = 0.0;
    double scaled = 0.0;
    for (const auto& [key, t] : link_times) {
      if (key.second != stages.devices[i]) continue;
      auto it = link_ratios.find(key);
      double r = it == link_ratios.end() ? 1.0 : it->second;
      raw += t;
      scaled += t / r;
    }
    if (raw > 0.0 && scaled > 0.0) out[i] = raw / scaled;
  }
  return out;
}

ThroughputReport evaluate(const OpDag& dag, const Assignment& assignment, const NetworkGraph& network,
                          const CostTable& costs, std::int64_t n_b, double samples,
                          const std::optional<LinkCompression>& compression, CompressedTimeOptions options) {
  StageCosts stages = stage_costs(dag, assignment, network, costs);
  ThroughputReport r;
  r.n_b = n_b;
  r.samples = samples;
  r.latency_fp = latency_fp(stages);
  r.pipeline_time = pipeline_time(stages, n_b);
  if (compression) {
    auto times = link_comm_times(dag, assignment, network, costs);
    auto ratios = device_ratios_from_links(stages, times, compression->link_ratios, compression->base_ratio);
    r.compressed_pipeline_time = compressed_pipeline_time(stages, n_b, compression->base_ratio, ratios, options);
  } else {
    r.compressed_pipeline_time = r.pipeline_time;
  }
  r.throughput = r.compressed_pipeline_time > 0.0 ? throughput(samples, r.compressed_pipeline_time) : 0.0;
  r.bottleneck_device = stages.size() ? stages.devices[bottleneck_index(stages)] : 0;
  return r;
}

std::string report_csv_header() {
  return "latency_fp,pipeline_time,compressed_pipeline_time,throughput,bottleneck_device";
}

std::string report_csv_row(const ThroughputReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d", report.latency_fp, report.pipeline_time,
                report.compressed_pipeline_time, report.throughput, report.bottleneck_device);
  return buf;
}

}  // namespace geotrain
