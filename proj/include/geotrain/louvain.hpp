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

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "geotrain/costmodel.hpp"

namespace geotrain {

/// Undirected weighted graph stored as a symmetric matrix in adjacency-list
/// form: entry (i, j, w) is present for both (i, j) and (j, i); a self-loop
/// appears once and contributes its weight to the degree once.
class WeightedGraph {
 public:
  explicit WeightedGraph(std::size_t vertices = 0) : adjacency_(vertices) {}

  void add_edge(std::size_t u, std::size_t v, double weight);

  std::size_t size() const noexcept { return adjacency_.size(); }
  const std::vector<std::pair<std::size_t, double>>& neighbors(std::size_t v) const { return adjacency_.at(v); }
  double degree(std::size_t v) const;
  double total_weight() const;  // 2m: sum of all matrix entries

 private:
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency_;
};

/// Newman modularity of a membership vector (community label per vertex).
double modularity(const WeightedGraph& graph, const std::vector<std::size_t>& membership);

struct LouvainResult {
  std::vector<std::size_t> membership;  // communities numbered by first member
  double modularity = 0.0;
};

/// Two-phase Louvain (local moves, then aggregation) to a fixed point,
/// followed by vertex-level refinement. Several starts with vertex orders
/// drawn from the seed are run and the best partition kept; equal gains pick
/// the lowest community id. Never returns a partition worse than one single
/// community.
LouvainResult louvain(const WeightedGraph& graph, std::uint64_t seed);

/// Device graph weighted by effective bandwidth 1 / beta, symmetrized by
/// averaging the two directions.
struct BandwidthGraph {
  std::vector<DeviceId> vertices;
  WeightedGraph graph;

  double weight(std::size_t i, std::size_t j) const;
};

BandwidthGraph make_bandwidth_graph(const NetworkGraph& network);

struct ClusterSet {
  std::vector<std::vector<DeviceId>> clusters;  // each sorted, ordered by first device id
  double modularity = 0.0;
};

ClusterSet louvain_cluster(const BandwidthGraph& graph, std::uint64_t seed);

}  // namespace geotrain
