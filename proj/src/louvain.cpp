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

#include "geotrain/louvain.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "geotrain/error.hpp"

namespace geotrain {

void WeightedGraph::add_edge(std::size_t u, std::size_t v, double weight) {
  if (u >= size() || v >= size()) throw Error(ErrorCode::kInvalidArgument, "edge endpoint out of range");
  if (!(weight >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "edge weights must be non-negative");
  auto bump = [&](std::size_t a, std::size_t b) {
    for (auto& [n, w] : adjacency_[a]) {
      if (n == b) {
        w += weight;
        return;
      }
    }
    adjacency_[a].emplace_back(b, weight);
  };
  bump(u, v);
  if (u != v) bump(v, u);
}

double WeightedGraph::degree(std::size_t v) const {
  double k = 0.0;
  for (const auto& [_, w] : adjacency_.at(v)) k += w;
  return k;
}

double WeightedGraph::total_weight() const {
  double total = 0.0;
  for (std::size_t v = 0; v < size(); ++v) total += degree(v);
  return total;
}

double modularity(const WeightedGraph& graph, const std::vector<std::size_t>& membership) {
  const double two_m = graph.total_weight();
  if (two_m <= 0.0) return 0.0;
  std::map<std::size_t, double> internal;
  std::map<std::size_t, double> tot;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    tot[membership[v]] += graph.degree(v);
    for (const auto& [u, w] : graph.neighbors(v)) {
      if (membership[u] == membership[v]) internal[membership[v]] += w;
    }
  }
  double q = 0.0;
  for (const auto& [c, t] : tot) q += internal[c] / two_m - (t / two_m) * (t / two_m);
  return q;
}

namespace {

// Fisher-Yates over raw engine output so the order is identical across
// standard library implementations.
std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// One level of local moves. Returns true if any vertex changed community.
bool local_moves(const WeightedGraph& g, std::vector<std::size_t>& community, std::mt19937_64& rng) {
  const std::size_t n = g.size();
  const double two_m = g.total_weight();
  if (two_m <= 0.0) return false;
  std::vector<double> k(n);
  std::vector<double> tot(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    k[v] = g.degree(v);
    tot[community[v]] += k[v];
  }
  const double eps = 1e-12;
  bool moved_any = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t v : shuffled(n, rng)) {
      std::size_t own = community[v];
      std::map<std::size_t, double> links;  // community -> weight from v
      links[own];
      for (const auto& [u, w] : g.neighbors(v)) {
        if (u != v) links[community[u]] += w;
      }
      tot[own] -= k[v];
      // Gain up to the constant factor 1/m: k_v,in(C) - tot_C * k_v / 2m.
      auto gain = [&](std::size_t c) { return links[c] - tot[c] * k[v] / two_m; };
      std::size_t best = own;
      double best_gain = gain(own);
      for (const auto& [c, _] : links) {
        if (c == own) continue;
        double gc = gain(c);
        if (gc > best_gain + eps || (best != own && gc >= best_gain - eps && c < best)) {
          best = c;
          best_gain = gc;
        }
      }
      tot[best] += k[v];
      if (best != own) {
        community[v] = best;
        moved = true;
        moved_any = true;
      }
    }
  }
  return moved_any;
}

// Relabels to 0..c-1 in order of first appearance.
std::size_t compact(std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> remap;
  for (auto& l : labels) {
    auto [it, _] = remap.emplace(l, remap.size());
    l = it->second;
  }
  return remap.size();
}

// Graph whose vertices are the communities of g.
WeightedGraph collapse(const WeightedGraph& g, const std::vector<std::size_t>& community, std::size_t count) {
  WeightedGraph next(count);
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (const auto& [u, w] : g.neighbors(v)) {
      if (u < v) continue;
      // An edge between two members of one community becomes a self-loop
      // carrying both matrix entries.
      bool folded = u != v && community[u] == community[v];
      next.add_edge(community[v], community[u], folded ? 2.0 * w : w);
    }
  }
  return next;
}

// Local moves then aggregation until no vertex moves. membership maps the
// original vertices to vertices of level and is updated in place.
void aggregate_levels(WeightedGraph& level, std::vector<std::size_t>& membership, std::mt19937_64& rng) {
  while (true) {
    std::vector<std::size_t> community(level.size());
    std::iota(community.begin(), community.end(), std::size_t{0});
    if (!local_moves(level, community, rng)) return;
    std::size_t count = compact(community);
    for (auto& m : membership) m = community[m];
    level = collapse(level, community, count);
    if (count == 1) return;
  }
}

// Kernighan-Lin style vertex moving: each vertex is moved exactly once per
// pass to its best community (a neighbouring one or a fresh one), even when
// the move lowers modularity, and the best partition seen is kept. Passes
// repeat while they improve.
void vertex_moving_refine(const WeightedGraph& g, std::vector<std::size_t>& community) {
  const std::size_t n = g.size();
  const double two_m = g.total_weight();
  if (two_m <= 0.0 || n < 2) return;
  std::vector<double> k(n);
  for (std::size_t v = 0; v < n; ++v) k[v] = g.degree(v);
  double best_q = modularity(g, community);
  while (true) {
    std::vector<std::size_t> state = community;
    std::vector<double> tot(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) tot[state[v]] += k[v];
    std::vector<bool> locked(n, false);
    double q = best_q;
    std::vector<std::size_t> best_state = community;
    double pass_best = best_q;
    for (std::size_t step = 0; step < n; ++step) {
      double move_gain = -std::numeric_limits<double>::infinity();
      std::size_t move_v = n;
      std::size_t move_c = n;
      for (std::size_t v = 0; v < n; ++v) {
        if (locked[v]) continue;
        std::size_t own = state[v];
        std::map<std::size_t, double> links;
        links[own];
        for (const auto& [u, w] : g.neighbors(v)) {
          if (u != v) links[state[u]] += w;
        }
        const double rest = tot[own] - k[v];
        const double stay = links[own] - rest * k[v] / two_m;
        auto consider = [&](std::size_t c, double gain) {
          double delta = 2.0 * (gain - stay) / two_m;
          if (delta > move_gain + 1e-15) {
            move_gain = delta;
            move_v = v;
            move_c = c;
          }
        };
        for (const auto& [c, l] : links) {
          if (c != own) consider(c, l - tot[c] * k[v] / two_m);
        }
        if (rest > 0.0) {
          for (std::size_t c = 0; c < n; ++c) {
            if (tot[c] == 0.0 && std::find(state.begin(), state.end(), c) == state.end()) {
              consider(c, 0.0);
              break;
            }
          }
        }
      }
      if (move_v == n) break;
      tot[state[move_v]] -= k[move_v];
      tot[move_c] += k[move_v];
      state[move_v] = move_c;
      locked[move_v] = true;
      q += move_gain;
      if (q > pass_best + 1e-12) {
        pass_best = modularity(g, state);
        q = pass_best;
        best_state = state;
      }
    }
    if (pass_best <= best_q + 1e-12) return;
    best_q = pass_best;
    community = std::move(best_state);
  }
}

constexpr int kLouvainStarts = 32;

// One multi-level run from singletons, vertex order drawn from rng.
std::vector<std::size_t> louvain_start(const WeightedGraph& base, std::mt19937_64& rng) {
  WeightedGraph level = base;
  std::vector<std::size_t> membership(base.size());
  std::iota(membership.begin(), membership.end(), std::size_t{0});
  while (true) {
    aggregate_levels(level, membership, rng);
    // Vertex-level refinement of the aggregated partition; a changed
    // partition is aggregated again from the refined communities.
    std::vector<std::size_t> refined = membership;
    if (!local_moves(base, refined, rng)) break;
    if (modularity(base, refined) <= modularity(base, membership) + 1e-12) break;
    membership = std::move(refined);
    std::size_t count = compact(membership);
    level = collapse(base, membership, count);
  }
  vertex_moving_refine(base, membership);
  compact(membership);
  return membership;
}

}  // namespace

LouvainResult louvain(const WeightedGraph& graph, std::uint64_t seed) {
  if (graph.size() == 0) throw Error(ErrorCode::kEmptyGraph, "graph has no vertices");

  // Modularity is scale-free; normalizing keeps the tolerance meaningful.
  double max_w = 0.0;
  for (std::size_t v = 0; v < graph.size(); ++v) {
    for (const auto& [_, w] : graph.neighbors(v)) max_w = std::max(max_w, w);
  }
  WeightedGraph level(graph.size());
  for (std::size_t v = 0; v < graph.size(); ++v) {
    for (const auto& [u, w] : graph.neighbors(v)) {
      if (u >= v) level.add_edge(v, u, max_w > 0.0 ? w / max_w : 0.0);
    }
  }

  const WeightedGraph base = level;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> membership;
  double best_q = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < kLouvainStarts; ++start) {
    auto candidate = louvain_start(base, rng);
    double q = modularity(base, candidate);
    if (q > best_q + 1e-12) {
      best_q = q;
      membership = std::move(candidate);
    }
  }

  LouvainResult result;
  compact(membership);
  result.membership = std::move(membership);
  result.modularity = modularity(graph, result.membership);
  if (result.modularity < 0.0) {
    result.membership.assign(graph.size(), 0);
    result.modularity = modularity(graph, result.membership);
  }
  return result;
}

double BandwidthGraph::weight(std::size_t i, std::size_t j) const {
  for (const auto& [n, w] : graph.neighbors(i)) {
    if (n == j) return w;
  }
  return 0.0;
}

BandwidthGraph make_bandwidth_graph(const NetworkGraph& network) {
  BandwidthGraph out;
  out.vertices = network.device_ids();
  out.graph = WeightedGraph(out.vertices.size());
  for (std::size_t i = 0; i < out.vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < out.vertices.size(); ++j) {
      double fwd = 1.0 / network.link(out.vertices[i], out.vertices[j]).beta;
      double back = 1.0 / network.link(out.vertices[j], out.vertices[i]).beta;
      out.graph.add_edge(i, j, 0.5 * (fwd + back));
    }
  }
  return out;
}

ClusterSet louvain_cluster(const BandwidthGraph& graph, std::uint64_t seed) {
  if (graph.vertices.empty()) throw Error(ErrorCode::kEmptyGraph, "no devices to cluster");
  auto result = louvain(graph.graph, seed);
  std::map<std::size_t, std::vector<DeviceId>> groups;
  for (std::size_t v = 0; v < graph.vertices.size(); ++v) groups[result.membership[v]].push_back(graph.vertices[v]);
  ClusterSet out;
  out.modularity = result.modularity;
  for (auto& [_, members] : groups) {
    std::sort(members.begin(), members.end());
    out.clusters.push_back(std::move(members));
  }
  std::sort(out.clusters.begin(), out.clusters.end());
  return out;
}

}  // namespace geotrain
