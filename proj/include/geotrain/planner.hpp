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

// Analytic latency / throughput model of a placed DAG: per-device compute
// and receive times, single-pass latency, pipelined time with n_b
// micro-batches, and the Top-K compressed variant.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geotrain/costmodel.hpp"
#include "geotrain/opdag.hpp"

namespace geotrain {

struct StageCosts {
  std::vector<DeviceId> devices;  // ascending id
  std::vector<double> compute;    // C_p
  std::vector<double> receive;    // R_p

  std::size_t size() const noexcept { return devices.size(); }
  double total(std::size_t i) const noexcept { return compute[i] + receive[i]; }
};

/// Builds StageCosts directly from C_p / R_p vectors (devices numbered 0..n-1).
StageCosts make_stage_costs(std::vector<double> compute, std::vector<double> receive);

/// C_p and R_p for every device of the network (idle devices contribute 0).
StageCosts stage_costs(const OpDag& dag, const Assignment& assignment, const NetworkGraph& network,
                       const CostTable& costs);

/// Estimated FP communication time aggregated per directed cross-device link.
std::map<LinkKey, double> link_comm_times(const OpDag& dag, const Assignment& assignment,
                                          const NetworkGraph& network, const CostTable& costs);

double latency_fp(const StageCosts& stages);

/// Sum_p (C_p + R_p) + (n_b - 1) * max_p max(C_p, R_p).
double pipeline_time(const StageCosts& stages, std::int64_t n_b);

double throughput(double samples, double pipeline_seconds);

struct CompressedTimeOptions {
  // Off: the bottleneck term is max_p max(C_p, R_p) * 3 / r as written.
  // On: it becomes max_p max(C_p, 3 R_p / r_p), leaving compute unscaled.
  bool compute_aware_bottleneck = false;
};

/// Compressed pipeline time with base ratio r and per-device ratios r_p.
double compressed_pipeline_time(const StageCosts& stages, std::int64_t n_b, double base_ratio,
                                const std::vector<double>& device_ratios, CompressedTimeOptions options = {});

/// Per-device ratio equivalent to a per-link plan: 3 R_p / r_p equals the
/// sum over incoming links of 3 R_l / r_l. Devices without traffic get 3r.
std::vector<double> device_ratios_from_links(const StageCosts& stages, const std::map<LinkKey, double>& link_times,
                                             const std::map<LinkKey, double>& link_ratios, double base_ratio);

/// Index of the device attaining max_p max(C_p, R_p); ties go to the lower id.
std::size_t bottleneck_index(const StageCosts& stages);

struct ThroughputReport {
  double latency_fp = 0.0;
  double pipeline_time = 0.0;
  double compressed_pipeline_time = 0.0;
  double throughput = 0.0;
  std::int64_t n_b = 1;
  double samples = 0.0;  // N_s
  DeviceId bottleneck_device = 0;
};

struct LinkCompression {
  double base_ratio = 1.0;
  std::map<LinkKey, double> link_ratios;
};

/// Full analytic evaluation. Without compression the compressed time equals
/// the pipeline time; throughput uses whichever time applies.
ThroughputReport evaluate(const OpDag& dag, const Assignment& assignment, const NetworkGraph& network,
                          const CostTable& costs, std::int64_t n_b, double samples,
                          const std::optional<LinkCompression>& compression = std::nullopt,
                          CompressedTimeOptions options = {});

std::string report_csv_header();
std::string report_csv_row(const ThroughputReport& report);

}  // namespace geotrain
