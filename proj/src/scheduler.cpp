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

#include "geotrain/scheduler.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>

#include "geotrain/error.hpp"

namespace geotrain {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double node_memory(const OpCost& c, std::int64_t n_b) {
  return 2.0 * c.param_bytes + static_cast<double>(n_b) * c.acti_bytes;
}

std::map<std::string, std::vector<std::string>> undirected_adjacency(const OpDag& dag) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [name, _] : dag.nodes()) adj[name];
  for (const auto& e : dag.fp_edges()) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  return adj;
}

// Weakly connected components of the subgraph induced by members.
std::vector<std::vector<std::string>> components(const std::map<std::string, std::vector<std::string>>& adj,
                                                 const std::set<std::string>& members,
                                                 const std::map<std::string, std::size_t>& topo_index) {
  std::vector<std::string> ordered(members.begin(), members.end());
  std::sort(ordered.begin(), ordered.end(),
            [&](const auto& a, const auto& b) { return topo_index.at(a) < topo_index.at(b); });
  std::set<std::string> seen;
  std::vector<std::vector<std::string>> out;
  for (const auto& start : ordered) {
    if (seen.contains(start)) continue;
    std::vector<std::string> comp;
    std::deque<std::string> queue{start};
    seen.insert(start);
    while (!queue.empty()) {
      auto v = queue.front();
      queue.pop_front();
      comp.push_back(v);
      for (const auto& u : adj.at(v)) {
        if (members.contains(u) && seen.insert(u).second) queue.push_back(u);
      }
    }
    out.push_back(std::move(comp));
  }
  return out;
}

std::map<DeviceId, std::set<std::string>> nodes_by_device(const Assignment& assignment) {
  std::map<DeviceId, std::set<std::string>> out;
  for (const auto& [name, d] : assignment) out[d].insert(name);
  return out;
}

}  // namespace

double estimate_subdag_memory(std::span<const std::string> nodes, const CostTable& costs, std::int64_t n_b) {
  double params = 0.0;
  double acti = 0.0;
  for (const auto& n : nodes) {
    const auto& c = costs.at(n);
    params += c.param_bytes;
    acti += c.acti_bytes;
  }
  return 2.0 * params + static_cast<double>(n_b) * acti;
}

std::vector<std::size_t> min_max_chain_partition(std::span<const double> weights, std::span<const double> speeds) {
  const std::size_t n = weights.size();
  const std::size_t blocks = speeds.size();
  if (blocks == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one block");
  for (double s : speeds) {
    if (!(s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "block speeds must be positive");
  }
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + weights[i];

  // best[b][j]: optimal bottleneck for items j.. over blocks b..
  std::vector<std::vector<double>> best(blocks + 1, std::vector<double>(n + 1, kInf));
  best[blocks][n] = 0.0;
  for (std::size_t b = blocks; b-- > 0;) {
    for (std::size_t j = 0; j <= n; ++j) {
      double v = kInf;
      for (std::size_t e = j; e <= n; ++e) {
        v = std::min(v, std::max((prefix[e] - prefix[j]) / speeds[b], best[b + 1][e]));
      }
      best[b][j] = v;
    }
  }
  const double target = best[0][0];
  const double slack = target * 1e-12 + 1e-300;
  std::vector<std::size_t> sizes;
  std::size_t j = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::size_t pick = j;
    for (std::size_t e = n + 1; e-- > j;) {
      if (std::max((prefix[e] - prefix[j]) / speeds[b], best[b + 1][e]) <= target + slack) {
        pick = e;
        break;
      }
    }
    sizes.push_back(pick - j);
    j = pick;
  }
  return sizes;
}

bool devices_weakly_connected(const OpDag& dag, const Assignment& assignment) {
  check_assignment(dag, assignment);
  auto adj = undirected_adjacency(dag);
  std::map<std::string, std::size_t> topo_index;
  auto order = topological_order(dag);
  for (std::size_t i = 0; i < order.size(); ++i) topo_index[order[i]] = i;
  for (const auto& [_, members] : nodes_by_device(assignment)) {
    if (components(adj, members, topo_index).size() > 1) return false;
  }
  return true;
}

void annotate_schedule(Schedule& schedule, const OpDag& dag, const NetworkGraph& network, const CostTable& costs,
                       std::int64_t n_b, double samples) {
  schedule.per_device_mem.clear();
  for (DeviceId d : network.device_ids()) schedule.per_device_mem[d] = 0.0;
  for (const auto& [name, d] : schedule.assignment) schedule.per_device_mem[d] += node_memory(costs.at(name), n_b);
  schedule.predicted = evaluate(dag, schedule.assignment, network, costs, n_b, samples);
}

namespace {

// Greedy bandwidth chain over a device set: start, then repeatedly append
// the remaining device with the highest bandwidth to the current tail.
std::vector<DeviceId> chain_devices(const std::vector<DeviceId>& members, DeviceId start, const BandwidthGraph& bw,
                                    const std::map<DeviceId, std::size_t>& vindex) {
  std::vector<DeviceId> chain{start};
  std::set<DeviceId> left(members.begin(), members.end());
  left.erase(start);
  while (!left.empty()) {
    DeviceId tail = chain.back();
    DeviceId pick = *left.begin();
    double best = -1.0;
    for (DeviceId d : left) {
      double w = bw.weight(vindex.at(tail), vindex.at(d));
      if (w > best) {
        best = w;
        pick = d;
      }
    }
    chain.push_back(pick);
    left.erase(pick);
  }
  return chain;
}

void repair_connectivity(const OpDag& dag, Assignment& assignment, const std::map<std::string, std::size_t>& topo_index,
                         const CostTable& costs) {
  auto adj = undirected_adjacency(dag);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [device, members] : nodes_by_device(assignment)) {
      auto comps = components(adj, members, topo_index);
      if (comps.size() < 2) continue;
      // Keep the heaviest component; ties keep the earliest one.
      std::size_t keep = 0;
      double keep_flops = -1.0;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        double f = 0.0;
        for (const auto& n : comps[i]) f += costs.at(n).flops;
        if (f > keep_flops) {
          keep_flops = f;
          keep = i;
        }
      }
      for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i == keep) continue;
        // Target: device of the earliest outside neighbour.
        std::optional<std::pair<std::size_t, DeviceId>> target;
        for (const auto& v : comps[i]) {
          for (const auto& u : adj.at(v)) {
            DeviceId du = assignment.at(u);
            if (du == device) continue;
            std::size_t idx = topo_index.at(u);
            if (!target || idx < target->first) target = std::make_pair(idx, du);
          }
        }
        if (!target) continue;  // an isolated island of the DAG itself
        for (const auto& v : comps[i]) assignment[v] = target->second;
        changed = true;
      }
      if (changed) break;
    }
  }
}

void repair_memory(const OpDag& dag, Assignment& assignment, const NetworkGraph& network, const CostTable& costs,
                   std::int64_t n_b, const std::map<std::string, std::size_t>& topo_index,
                   const std::vector<DeviceId>& device_chain) {
  auto adj = undirected_adjacency(dag);
  auto usage = [&](DeviceId d) {
    double u = 0.0;
    for (const auto& [name, dev] : assignment) {
      if (dev == d) u += node_memory(costs.at(name), n_b);
    }
    return u;
  };
  const std::size_t max_steps = 4 * dag.size() * std::max<std::size_t>(1, device_chain.size()) + 16;
  for (std::size_t step = 0; step < max_steps; ++step) {
    std::optional<DeviceId> over;
    for (DeviceId d : device_chain) {
      if (usage(d) > network.device(d).mem_gpu) {
        over = d;
        break;
      }
    }
    if (!over) return;

    auto members = nodes_by_device(assignment)[*over];
    struct Move {
      std::string node;
      DeviceId to;
      double slack;
      std::size_t index;
    };
    std::optional<Move> best;
    for (const auto& v : members) {
      double need = node_memory(costs.at(v), n_b);
      if (need <= 0.0) continue;
      auto rest = members;
      rest.erase(v);
      if (!rest.empty() && components(adj, rest, topo_index).size() > 1) continue;
      for (const auto& u : adj.at(v)) {
        DeviceId to = assignment.at(u);
        if (to == *over) continue;
        double slack = network.device(to).mem_gpu - usage(to) - need;
        if (slack < 0.0) continue;
        Move m{v, to, slack, topo_index.at(v)};
        if (!best || m.slack > best->slack || (m.slack == best->slack && m.index < best->index)) best = m;
      }
    }
    if (!best) {
      throw Error(ErrorCode::kInfeasibleMemory,
                  "device " + std::to_string(*over) + " exceeds its GPU memory and no boundary node can move");
    }
    assignment[best->node] = best->to;
  }
  throw Error(ErrorCode::kInfeasibleMemory, "memory repair did not converge");
}

}  // namespace

Schedule opfence_schedule(const OpDag& dag, const NetworkGraph& network, const CostTable& costs,
                          const OpFenceOptions& options) {
  if (network.size() == 0) throw Error(ErrorCode::kEmptyGraph, "network has no devices");
  if (options.n_b < 1) throw Error(ErrorCode::kInvalidMicroBatchCount, "n_b must be >= 1");

  auto order = topological_order(dag);
  std::map<std::string, std::size_t> topo_index;
  for (std::size_t i = 0; i < order.size(); ++i) topo_index[order[i]] = i;

  double need = 0.0;
  for (const auto& n : order) need += node_memory(costs.at(n), options.n_b);
  double budget = 0.0;
  for (const auto& d : network.devices()) budget += d.mem_gpu;
  if (need > budget) throw Error(ErrorCode::kInfeasibleMemory, "total memory demand exceeds all GPU budgets");

  BandwidthGraph bw = make_bandwidth_graph(network);
  std::map<DeviceId, std::size_t> vindex;
  for (std::size_t i = 0; i < bw.vertices.size(); ++i) vindex[bw.vertices[i]] = i;
  {
    std::set<std::size_t> seen{0};
    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
      auto v = queue.front();
      queue.pop_front();
      for (const auto& [u, w] : bw.graph.neighbors(v)) {
        if (w > 0.0 && seen.insert(u).second) queue.push_back(u);
      }
    }
    if (seen.size() != bw.vertices.size()) throw Error(ErrorCode::kDisconnectedNetwork, "device graph is disconnected");
  }

  ClusterSet clusters = louvain_cluster(bw, options.seed);
  auto speed = [&](DeviceId d) { return network.device(d).effective_flops(); };
  auto cluster_speed = [&](const std::vector<DeviceId>& c) {
    double s = 0.0;
    for (DeviceId d : c) s += speed(d);
    return s;
  };

  // Cluster chain: fastest cluster first, then highest aggregate bandwidth to the tail.
  std::vector<std::size_t> chain;
  {
    std::set<std::size_t> left;
    for (std::size_t i = 0; i < clusters.clusters.size(); ++i) left.insert(i);
    std::size_t first = 0;
    for (std::size_t i = 1; i < clusters.clusters.size(); ++i) {
      if (cluster_speed(clusters.clusters[i]) > cluster_speed(clusters.clusters[first])) first = i;
    }
    chain.push_back(first);
    left.erase(first);
    while (!left.empty()) {
      const auto& tail = clusters.clusters[chain.back()];
      std::size_t pick = *left.begin();
      double best = -1.0;
      for (std::size_t c : left) {
        double w = 0.0;
        for (DeviceId a : tail) {
          for (DeviceId b : clusters.clusters[c]) w += bw.weight(vindex[a], vindex[b]);
        }
        if (w > best) {
          best = w;
          pick = c;
        }
      }
      chain.push_back(pick);
      left.erase(pick);
    }
  }

  Schedule schedule;
  schedule.modularity = clusters.modularity;
  std::vector<DeviceId> device_chain;
  for (std::size_t ci : chain) {
    const auto& members = clusters.clusters[ci];
    DeviceId start = members.front();
    if (device_chain.empty()) {
      for (DeviceId d : members) {
        if (speed(d) > speed(start)) start = d;
      }
    } else {
      double best = -1.0;
      for (DeviceId d : members) {
        double w = bw.weight(vindex[device_chain.back()], vindex[d]);
        if (w > best) {
          best = w;
          start = d;
        }
      }
    }
    auto ordered = chain_devices(members, start, bw, vindex);
    device_chain.insert(device_chain.end(), ordered.begin(), ordered.end());
    schedule.cluster_order.push_back(std::move(ordered));
  }

  // Segment the topological order across clusters, then across each
  // cluster's devices, balancing FLOPs against effective speed.
  std::vector<double> weights;
  for (const auto& n : order) weights.push_back(costs.at(n).flops);
  std::vector<double> cluster_speeds;
  for (const auto& c : schedule.cluster_order) cluster_speeds.push_back(cluster_speed(c));
  auto cluster_sizes = min_max_chain_partition(weights, cluster_speeds);

  std::size_t pos = 0;
  for (std::size_t c = 0; c < schedule.cluster_order.size(); ++c) {
    const auto& devices = schedule.cluster_order[c];
    std::span<const double> segment(weights.data() + pos, cluster_sizes[c]);
    std::vector<double> speeds;
    for (DeviceId d : devices) speeds.push_back(speed(d));
    auto sizes = min_max_chain_partition(segment, speeds);
    for (std::size_t i = 0; i < devices.size(); ++i) {
      for (std::size_t k = 0; k < sizes[i]; ++k) schedule.assignment[order[pos++]] = devices[i];
    }
  }

  repair_connectivity(dag, schedule.assignment, topo_index, costs);
  repair_memory(dag, schedule.assignment, network, costs, options.n_b, topo_index, device_chain);
  annotate_schedule(schedule, dag, network, costs, options.n_b, options.samples);
  return schedule;
}

Schedule baseline_equal_number(const OpDag& dag, std::span<const DeviceId> devices) {
  if (devices.empty()) throw Error(ErrorCode::kInvalidArgument, "need at least one device");
  std::vector<DeviceId> ids(devices.begin(), devices.end());
  std::sort(ids.begin(), ids.end());
  auto order = topological_order(dag);
  const std::size_t base = order.size() / ids.size();
  const std::size_t rem = order.size() % ids.size();
  Schedule s;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::size_t count = base + (i < rem ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) s.assignment[order[pos++]] = ids[i];
  }
  s.cluster_order.push_back(ids);
  return s;
}

Schedule baseline_equal_compute(const OpDag& dag, std::span<const DeviceId> devices, const CostTable& costs) {
  if (devices.empty()) throw Error(ErrorCode::kInvalidArgument, "need at least one device");
  std::vector<DeviceId> ids(devices.begin(), devices.end());
  std::sort(ids.begin(), ids.end());
  auto order = topological_order(dag);
  std::vector<double> weights;
  for (const auto& n : order) weights.push_back(costs.at(n).flops);
  std::vector<double> unit(ids.size(), 1.0);
  auto sizes = min_max_chain_partition(weights, unit);
  Schedule s;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < sizes[i]; ++k) s.assignment[order[pos++]] = ids[i];
  }
  s.cluster_order.push_back(ids);
  return s;
}

}  // namespace geotrain
