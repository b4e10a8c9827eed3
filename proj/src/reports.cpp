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

#include "geotrain/reports.hpp"

#include <cstdio>
#include <fstream>
#include <tuple>

#include "geotrain/error.hpp"

namespace geotrain {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::kInvalidArgument, "failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json schedule_json(const Schedule& schedule, std::string_view scheduler,
                   const std::optional<CompressionPlan>& compression) {
  json doc;
  doc["scheduler"] = scheduler;
  doc["assignment"] = schedule.assignment;
  doc["clusters"] = schedule.cluster_order;
  doc["modularity"] = schedule.modularity;
  json mem = json::object();
  for (const auto& [d, bytes] : schedule.per_device_mem) mem[std::to_string(d)] = bytes;
  doc["per_device_mem"] = mem;
  if (compression) {
    json links = json::array();
    for (const auto& [key, ratio] : compression->link_ratios) {
      auto t = compression->link_times.find(key);
      links.push_back({{"src", key.first},
                       {"dst", key.second},
                       {"ratio", ratio},
                       {"time", t == compression->link_times.end() ? 0.0 : t->second}});
    }
    doc["compression"] = {{"base_ratio", compression->base_ratio}, {"links", links}};
  } else {
    doc["compression"] = nullptr;
  }
  return doc;
}

json report_json(const ThroughputReport& report, const StageCosts& stages) {
  json st = json::array();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    st.push_back({{"device", stages.devices[i]}, {"compute", stages.compute[i]}, {"receive", stages.receive[i]}});
  }
  return {{"latency_fp", report.latency_fp},
          {"pipeline_time", report.pipeline_time},
          {"compressed_pipeline_time", report.compressed_pipeline_time},
          {"throughput", report.throughput},
          {"n_b", report.n_b},
          {"samples", report.samples},
          {"bottleneck_device", report.bottleneck_device},
          {"stages", st}};
}

json trace_json(const SimTrace& trace) {
  json events = json::array();
  for (const auto& e : trace.events) {
    json ev = {{"time", e.time},
               {"kind", to_string(e.kind)},
               {"phase", to_string(e.phase)},
               {"ref", e.ref},
               {"micro_batch", e.micro_batch},
               {"device", e.device}};
    if (e.kind == EventKind::kMsgSend || e.kind == EventKind::kMsgArrive) {
      ev["peer"] = e.peer;
      ev["bytes"] = e.bytes;
    }
    events.push_back(std::move(ev));
  }
  json busy = json::object();
  for (const auto& [d, t] : trace.fp_busy) busy[std::to_string(d)] = {{"fp", t}, {"bp", trace.bp_busy.at(d)}};
  json links = json::array();
  for (const auto& [key, bytes] : trace.link_bytes) links.push_back({{"src", key.first}, {"dst", key.second}, {"bytes", bytes}});
  return {{"makespan", trace.makespan}, {"fp_makespan", trace.fp_makespan}, {"n_b", trace.n_b},
          {"compressed", trace.compressed}, {"busy", busy},           {"link_bytes", links},
          {"events", events}};
}

json chrome_trace_json(const SimTrace& trace) {
  using Key = std::tuple<Phase, std::string, std::int64_t, DeviceId, DeviceId>;
  std::map<Key, double> open;
  std::map<DeviceId, int> device_pid;
  for (const auto& [d, _] : trace.fp_busy) device_pid.emplace(d, static_cast<int>(device_pid.size()) + 1);
  std::map<LinkKey, int> link_tid;

  json events = json::array();
  for (const auto& [d, pid] : device_pid) {
    events.push_back({{"name", "process_name"}, {"ph", "M"}, {"pid", pid}, {"tid", 0},
                      {"args", {{"name", "device " + std::to_string(d)}}}});
  }
  for (const auto& e : trace.events) {
    bool message = e.kind == EventKind::kMsgSend || e.kind == EventKind::kMsgArrive;
    Key key{e.phase, e.ref, e.micro_batch, e.device, message ? e.peer : e.device};
    if (e.kind == EventKind::kOpStart || e.kind == EventKind::kMsgSend) {
      open[key] = e.time;
      continue;
    }
    auto it = open.find(key);
    if (it == open.end()) continue;
    double start = it->second;
    open.erase(it);
    int pid = device_pid.emplace(e.device, static_cast<int>(device_pid.size()) + 1).first->second;
    int tid = 0;
    if (message) {
      auto [lt, inserted] = link_tid.emplace(LinkKey{e.device, e.peer}, static_cast<int>(link_tid.size()) + 1);
      tid = lt->second;
      if (inserted) {
        events.push_back({{"name", "thread_name"}, {"ph", "M"}, {"pid", pid}, {"tid", tid},
                          {"args", {{"name", "link -> " + std::to_string(e.peer)}}}});
      }
    }
    events.push_back({{"name", e.ref + " #" + std::to_string(e.micro_batch)},
                      {"cat", std::string(to_string(e.phase)) + (message ? "-msg" : "")},
                      {"ph", "X"},
                      {"pid", pid},
                      {"tid", tid},
                      {"ts", start * 1e6},
                      {"dur", (e.time - start) * 1e6}});
  }
  return {{"traceEvents", events}, {"displayTimeUnit", "ms"}};
}

}  // namespace geotrain
