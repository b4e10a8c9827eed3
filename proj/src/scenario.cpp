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

#include "geotrain/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "geotrain/error.hpp"

namespace geotrain {

using nlohmann::json;

std::string_view to_string(SchedulerKind kind) noexcept {
  switch (kind) {
    case SchedulerKind::kOpFence: return "opfence";
    case SchedulerKind::kEqualNumber: return "equal_number";
    case SchedulerKind::kEqualCompute: return "equal_compute";
    case SchedulerKind::kManual: return "manual";
  }
  return "?";
}

std::string_view to_string(CompressionKind kind) noexcept {
  switch (kind) {
    case CompressionKind::kNone: return "none";
    case CompressionKind::kUniformTopK: return "uniform_topk";
    case CompressionKind::kAdaTopK: return "adatopk";
  }
  return "?";
}

SchedulerKind parse_scheduler(std::string_view text) {
  for (auto k : {SchedulerKind::kOpFence, SchedulerKind::kEqualNumber, SchedulerKind::kEqualCompute,
                 SchedulerKind::kManual}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::kSchemaError, "field 'scheduler': unknown scheduler '" + std::string(text) + "'");
}

CompressionKind parse_compression(std::string_view text) {
  for (auto k : {CompressionKind::kNone, CompressionKind::kUniformTopK, CompressionKind::kAdaTopK}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::kSchemaError, "field 'compression': unknown compression '" + std::string(text) + "'");
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kSchemaError, "field '" + field + "': " + what);
}

const json& member(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

std::int64_t as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

const json& as_object(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected an object");
  return v;
}

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.contains(it.key())) fail(join(path, it.key()), "unknown field");
  }
}

OpNode parse_node(const json& v, const std::string& path) {
  as_object(v, path);
  reject_unknown(v, path, {"name", "type", "kind", "args", "attrs", "shape", "requires_grad"});
  OpNode node;
  node.name = as_string(member(v, path, "name"), join(path, "name"));
  try {
    node.type = parse_op_type(as_string(member(v, path, "type"), join(path, "type")));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchemaError) throw;
    fail(join(path, "type"), e.what());
  }
  node.kind = as_string(member(v, path, "kind"), join(path, "kind"));
  node.requires_grad = default_requires_grad(node.type);
  if (auto it = v.find("args"); it != v.end()) {
    auto p = join(path, "args");
    for (std::size_t i = 0; i < as_array(*it, p).size(); ++i) node.args.push_back(as_string((*it)[i], index(p, i)));
  }
  if (auto it = v.find("attrs"); it != v.end()) {
    auto p = join(path, "attrs");
    for (auto a = as_object(*it, p).begin(); a != it->end(); ++a) node.attrs[a.key()] = as_int(a.value(), join(p, a.key()));
  }
  if (auto it = v.find("shape"); it != v.end()) {
    auto p = join(path, "shape");
    for (std::size_t i = 0; i < as_array(*it, p).size(); ++i) {
      auto dim = as_int((*it)[i], index(p, i));
      if (dim < 1) fail(index(p, i), "dimensions must be >= 1");
      node.shape.push_back(dim);
    }
  }
  if (auto it = v.find("requires_grad"); it != v.end()) {
    if (!it->is_boolean()) fail(join(path, "requires_grad"), "expected a boolean");
    node.requires_grad = it->get<bool>();
  }
  return node;
}

DeviceProfile parse_device(const json& v, const std::string& path) {
  as_object(v, path);
  reject_unknown(v, path, {"id", "name", "peak_flops", "lambda", "mem_gpu", "mem_cpu", "mem_disk"});
  DeviceProfile d;
  d.id = static_cast<DeviceId>(as_int(member(v, path, "id"), join(path, "id")));
  d.name = v.contains("name") ? as_string(v["name"], join(path, "name")) : "device" + std::to_string(d.id);
  d.peak_flops = as_number(member(v, path, "peak_flops"), join(path, "peak_flops"));
  if (!(d.peak_flops > 0.0)) fail(join(path, "peak_flops"), "must be > 0");
  if (v.contains("lambda")) {
    d.lambda = as_number(v["lambda"], join(path, "lambda"));
    if (!(d.lambda > 0.0 && d.lambda <= 1.0)) fail(join(path, "lambda"), "must be in (0, 1]");
  }
  for (auto [key, slot] : {std::pair{"mem_gpu", &d.mem_gpu}, {"mem_cpu", &d.mem_cpu}, {"mem_disk", &d.mem_disk}}) {
    if (!v.contains(key)) continue;
    *slot = as_number(v[key], join(path, key));
    if (*slot < 0.0) fail(join(path, key), "must be >= 0");
  }
  return d;
}

std::vector<std::vector<double>> parse_matrix(const json& v, const std::string& path, std::size_t n) {
  as_array(v, path);
  if (v.size() != n) fail(path, "expected " + std::to_string(n) + " rows, found " + std::to_string(v.size()));
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto row_path = index(path, i);
    const json& row = as_array(v[i], row_path);
    if (row.size() != n) fail(row_path, "expected " + std::to_string(n) + " entries, found " + std::to_string(row.size()));
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j && row[j].is_null()) continue;
      m[i][j] = as_number(row[j], index(row_path, j));
    }
  }
  return m;
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  as_object(doc, "<root>");
  reject_unknown(doc, "", {"schema", "name", "description", "dag", "devices", "links", "n_b", "micro_batch_size",
                           "samples", "ratio", "scheduler", "compression", "seed", "iterations", "learning_rate",
                           "assignment"});
  auto schema = as_string(member(doc, "", "schema"), "schema");
  if (schema != kScenarioSchema) fail("schema", "unsupported version '" + schema + "', expected '" + kScenarioSchema + "'");

  Scenario s;
  s.name = doc.contains("name") ? as_string(doc["name"], "name") : "scenario";

  const json& dag = as_array(member(doc, "", "dag"), "dag");
  if (dag.empty()) fail("dag", "must contain at least one node");
  for (std::size_t i = 0; i < dag.size(); ++i) s.nodes.push_back(parse_node(dag[i], index("dag", i)));

  const json& devices = as_array(member(doc, "", "devices"), "devices");
  if (devices.empty()) fail("devices", "must contain at least one device");
  std::vector<DeviceProfile> profiles;
  std::set<DeviceId> ids;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    profiles.push_back(parse_device(devices[i], index("devices", i)));
    if (!ids.insert(profiles.back().id).second) fail(index("devices", i) + ".id", "duplicate device id");
  }

  const json& links = as_object(member(doc, "", "links"), "links");
  reject_unknown(links, "links", {"alpha", "beta"});
  auto alpha = parse_matrix(member(links, "links", "alpha"), "links.alpha", profiles.size());
  auto beta = parse_matrix(member(links, "links", "beta"), "links.beta", profiles.size());
  std::vector<LinkProfile> link_profiles;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    for (std::size_t j = 0; j < profiles.size(); ++j) {
      if (i == j) continue;
      if (alpha[i][j] < 0.0) fail(index(index("links.alpha", i), j), "must be >= 0");
      if (!(beta[i][j] > 0.0)) fail(index(index("links.beta", i), j), "must be > 0");
      link_profiles.push_back({profiles[i].id, profiles[j].id, alpha[i][j], beta[i][j]});
    }
  }

  s.n_b = as_int(member(doc, "", "n_b"), "n_b");
  if (s.n_b < 1) fail("n_b", "must be >= 1");
  s.micro_batch_size = as_int(member(doc, "", "micro_batch_size"), "micro_batch_size");
  if (s.micro_batch_size < 1) fail("micro_batch_size", "must be >= 1");
  s.samples = static_cast<double>(s.micro_batch_size * s.n_b);
  if (doc.contains("samples") && as_number(doc["samples"], "samples") != s.samples) {
    fail("samples", "must equal micro_batch_size * n_b = " + std::to_string(s.micro_batch_size * s.n_b));
  }
  if (doc.contains("ratio")) {
    s.ratio = as_number(doc["ratio"], "ratio");
    if (!(s.ratio >= 1.0)) fail("ratio", "must be >= 1");
  }
  if (doc.contains("scheduler")) s.scheduler = parse_scheduler(as_string(doc["scheduler"], "scheduler"));
  if (doc.contains("compression")) s.compression = parse_compression(as_string(doc["compression"], "compression"));
  if (doc.contains("seed")) {
    auto seed = as_int(doc["seed"], "seed");
    if (seed < 0) fail("seed", "must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
  }
  if (doc.contains("iterations")) {
    s.iterations = as_int(doc["iterations"], "iterations");
    if (s.iterations < 1) fail("iterations", "must be >= 1");
  }
  if (doc.contains("learning_rate")) {
    s.learning_rate = as_number(doc["learning_rate"], "learning_rate");
    if (!(s.learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  }
  if (doc.contains("assignment")) {
    Assignment a;
    const json& obj = as_object(doc["assignment"], "assignment");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      auto path = join("assignment", it.key());
      auto d = static_cast<DeviceId>(as_int(it.value(), path));
      if (!ids.contains(d)) fail(path, "unknown device " + std::to_string(d));
      a[it.key()] = d;
    }
    s.assignment = std::move(a);
  }
  if (s.scheduler == SchedulerKind::kManual && !s.assignment) fail("assignment", "required by the manual scheduler");

  try {
    s.dag = build_dag(s.nodes);
    infer_shapes(s.dag);
    if (s.assignment) check_assignment(s.dag, *s.assignment);
  } catch (const Error& e) {
    fail("dag", e.what());
  }
  try {
    s.network = NetworkGraph(std::move(profiles), std::move(link_profiles));
  } catch (const Error& e) {
    fail("links", e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kSchemaError, "cannot open scenario '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, "scenario '" + path.string() + "' is not valid JSON: " + e.what());
  }
  Scenario s = parse_scenario(doc);
  if (!doc.contains("name")) s.name = path.stem().string();
  return s;
}

}  // namespace geotrain
