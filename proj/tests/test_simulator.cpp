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

#include <gtest/gtest.h>

#include <random>

#include "geotrain/error.hpp"
#include "geotrain/reports.hpp"
#include "geotrain/simulator.hpp"
#include "test_support.hpp"

namespace geotrain {
namespace {

// Stage p holds op p of a chain on device p. Devices run at 1 FLOP/s and
// links at 1 s/byte with no latency, so integer FLOPs and bytes give exact
// integer times.
struct ChainCase {
  OpDag dag;
  Assignment assignment;
  CostTable costs;
  NetworkGraph network;
};

ChainCase unit_chain(const std::vector<double>& compute, const std::vector<double>& transfer) {
  const int n = static_cast<int>(compute.size());
  ChainCase c{build_dag(testing::linear_chain(n, 4)), {}, {}, {}};
  auto order = topological_order(c.dag);
  for (int p = 0; p < n; ++p) {
    c.assignment[order[p]] = p;
    double out = p + 1 < n ? transfer[p + 1] : 1.0;
    c.costs[order[p]] = OpCost{.flops = compute[p], .out_bytes = out};
  }
  c.network = testing::uniform_network(n, 0.0, 1.0, 1.0);
  return c;
}

TEST(Simulator, TwoStageNoCommIsTheSerialSum) {
  auto c = unit_chain({2, 2}, {0, 0});
  c.network = testing::uniform_network(2, 0.0, 1e-30, 1.0);
  auto t = simulate(c.dag, c.assignment, c.costs, c.network, 1);
  EXPECT_NEAR(t.fp_makespan, 4.0, 1e-20);
}

TEST(Simulator, TwoStageThreeMicroBatches) {
  auto c = unit_chain({2, 2}, {0, 1});
  auto t = simulate(c.dag, c.assignment, c.costs, c.network, 3);
  auto stages = stage_costs(c.dag, c.assignment, c.network, c.costs);
  EXPECT_EQ(stages.receive, (std::vector<double>{0, 1}));
  EXPECT_EQ(t.fp_makespan, 9.0);
  EXPECT_EQ(pipeline_time(stages, 3), 9.0);
}

TEST(Simulator, BalancedChainsMatchThePipelineFormula) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    int n = 1 + static_cast<int>(rng() % 6);
    double c = static_cast<double>(1 + rng() % 8);
    std::vector<double> compute(n, c), transfer(n, 0.0);
    for (int p = 1; p < n; ++p) transfer[p] = static_cast<double>(rng() % (static_cast<std::uint64_t>(c) + 1));
    auto cc = unit_chain(compute, transfer);
    std::int64_t n_b = 1 + static_cast<std::int64_t>(rng() % 6);
    auto trace = simulate(cc.dag, cc.assignment, cc.costs, cc.network, n_b);
    auto stages = stage_costs(cc.dag, cc.assignment, cc.network, cc.costs);
    ASSERT_EQ(trace.fp_makespan, pipeline_time(stages, n_b)) << "case " << t;
    auto report = evaluate(cc.dag, cc.assignment, cc.network, cc.costs, n_b, 1.0);
    EXPECT_EQ(analytic_gap(trace, report), 0.0);
  }
}

TEST(Simulator, SingleMicroBatchChainIsTheLatency) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    int n = 1 + static_cast<int>(rng() % 6);
    std::vector<double> compute(n), transfer(n, 0.0);
    for (auto& x : compute) x = static_cast<double>(1 + rng() % 20);
    for (int p = 1; p < n; ++p) transfer[p] = static_cast<double>(rng() % 20);
    auto cc = unit_chain(compute, transfer);
    auto trace = simulate(cc.dag, cc.assignment, cc.costs, cc.network, 1);
    EXPECT_EQ(trace.fp_makespan, latency_fp(stage_costs(cc.dag, cc.assignment, cc.network, cc.costs)));
  }
}

TEST(Simulator, ImbalancedChainsRespectTheLowerBound) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    int n = 2 + static_cast<int>(rng() % 5);
    std::vector<double> compute(n), transfer(n, 0.0);
    for (auto& x : compute) x = static_cast<double>(1 + rng() % 30);
    for (int p = 1; p < n; ++p) transfer[p] = static_cast<double>(rng() % 30);
    auto cc = unit_chain(compute, transfer);
    std::int64_t n_b = 1 + static_cast<std::int64_t>(rng() % 8);
    auto trace = simulate(cc.dag, cc.assignment, cc.costs, cc.network, n_b);
    double bound = testing::makespan_lower_bound(cc.dag, cc.assignment, cc.costs, cc.network, n_b);
    EXPECT_GE(trace.fp_makespan, bound);
    EXPECT_GE(trace.makespan, trace.fp_makespan);
    auto report = evaluate(cc.dag, cc.assignment, cc.network, cc.costs, n_b, 1.0);
    EXPECT_GE(analytic_gap(trace, report), 0.0);
  }
}

TEST(Simulator, ParallelBranchesOpenAGap) {
  auto dag = testing::fig3_dag();
  auto net = testing::uniform_network(4, 1e-3, 1e-8);
  auto costs = estimate_costs(dag, 4);
  auto trace = simulate(dag, testing::fig3_assignment(), costs, net, 4);
  auto report = evaluate(dag, testing::fig3_assignment(), net, costs, 4, 16.0);
  EXPECT_GT(analytic_gap(trace, report), 0.0);
  EXPECT_LT(trace.fp_makespan, report.pipeline_time);
}

TEST(Simulator, RandomDagsAreCausalAndConserveWork) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 40; ++t) {
    auto dag = build_dag(testing::random_dag(rng, 12));
    auto a = testing::random_assignment(dag, 3, rng);
    auto net = testing::uniform_network(3, 1e-4, 1e-9, 1e12);
    auto costs = estimate_costs(dag, 4);
    std::int64_t n_b = 1 + static_cast<std::int64_t>(rng() % 4);
    auto trace = simulate(dag, a, costs, net, n_b);
    EXPECT_EQ(testing::check_trace_causality(trace, dag, a), "") << "dag " << t;
    double busy = 0.0, work = 0.0;
    for (const auto& [_, b] : trace.fp_busy) busy += b;
    for (const auto& [name, d] : a) work += static_cast<double>(n_b) * compute_time(costs.at(name).flops, net.device(d));
    EXPECT_NEAR(busy, work, 1e-12 * std::max(1.0, work));
    EXPECT_GE(trace.fp_makespan, testing::makespan_lower_bound(dag, a, costs, net, n_b) * (1 - 1e-12));
    for (const auto& [d, _] : trace.fp_busy) EXPECT_LE(trace.busy(d), trace.makespan * (1 + 1e-12));
    double last = 0.0;
    for (const auto& e : trace.events) {
      EXPECT_GE(e.time, last);
      last = e.time;
    }
    EXPECT_EQ(last, trace.makespan);
  }
}

TEST(Simulator, Deterministic) {
  auto dag = testing::fig3_dag();
  auto net = testing::uniform_network(4, 1e-3, 1e-8);
  auto costs = estimate_costs(dag, 4);
  auto a = trace_json(simulate(dag, testing::fig3_assignment(), costs, net, 3)).dump();
  auto b = trace_json(simulate(dag, testing::fig3_assignment(), costs, net, 3)).dump();
  EXPECT_EQ(a, b);
}

TEST(Simulator, CompressionShrinksTheCrossingPayload) {
  auto c = unit_chain({2, 2}, {0, 3600});
  auto plain = simulate(c.dag, c.assignment, c.costs, c.network, 3);
  CompressionPlan plan{.base_ratio = 3, .link_ratios = {{{0, 1}, 9.0}, {{1, 0}, 9.0}}};
  auto packed = simulate(c.dag, c.assignment, c.costs, c.network, 3, plan);
  EXPECT_TRUE(packed.compressed);
  EXPECT_EQ(plain.link_bytes.at({0, 1}), 3 * 3600.0);
  EXPECT_EQ(packed.link_bytes.at({0, 1}), 3 * 1200.0);
  EXPECT_LT(packed.makespan, plain.makespan);
  EXPECT_LT(packed.fp_makespan, plain.fp_makespan);
}

TEST(Simulator, Errors) {
  auto c = unit_chain({1, 1}, {0, 1});
  try {
    simulate(c.dag, c.assignment, c.costs, c.network, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidMicroBatchCount);
  }
  c.assignment.erase("op01");
  try {
    simulate(c.dag, c.assignment, c.costs, c.network, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnassignedNode);
  }
}

TEST(Reports, ChromeTraceHasOneCompleteEventPerTask) {
  auto c = unit_chain({2, 2}, {0, 1});
  auto trace = simulate(c.dag, c.assignment, c.costs, c.network, 2);
  auto doc = chrome_trace_json(trace);
  std::size_t complete = 0;
  for (const auto& ev : doc["traceEvents"]) complete += ev["ph"] == "X";
  std::size_t starts = 0;
  for (const auto& e : trace.events) starts += e.kind == EventKind::kOpStart || e.kind == EventKind::kMsgSend;
  EXPECT_EQ(complete, starts);
}

}  // namespace
}  // namespace geotrain
