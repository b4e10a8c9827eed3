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

#include <filesystem>
#include <fstream>
#include <random>

#include "geotrain/costmodel.hpp"
#include "geotrain/error.hpp"
#include "test_support.hpp"

namespace geotrain {
namespace {

TensorShape batched(std::vector<std::int64_t> dims) { return {true, std::move(dims)}; }

TEST(EstimateOpCost, LinearFormula) {
  auto node = make_node("fc", OpType::kParametricOp, "linear", {"x"}, {{"out", 5}});
  OpCost c = estimate_op_cost(node, {batched({4})}, 3);
  EXPECT_DOUBLE_EQ(c.flops, 120.0);
  EXPECT_DOUBLE_EQ(c.out_bytes, 60.0);
  EXPECT_DOUBLE_EQ(c.param_bytes, (4.0 * 5.0 + 5.0) * 4.0);
  EXPECT_DOUBLE_EQ(c.bp_flops(), 240.0);
}

TEST(EstimateOpCost, ReluCountsElements) {
  auto node = make_node("r", OpType::kNonParametricOp, "relu", {"x"});
  OpCost c = estimate_op_cost(node, {batched({1000})}, 1);
  EXPECT_DOUBLE_EQ(c.flops, 1000.0);
  EXPECT_DOUBLE_EQ(c.out_bytes, 4000.0);
}

TEST(EstimateOpCost, ConvMatchesMultiplyAccumulateCount) {
  auto node = make_node("c", OpType::kParametricOp, "conv2d", {"img"},
                        {{"out_channels", 64}, {"kernel_size", 3}, {"stride", 1}, {"padding", 1}});
  OpCost c = estimate_op_cost(node, {batched({3, 32, 32})}, 1);
  // Count one multiply-accumulate per (output element, input channel, tap).
  double macs = 0.0;
  for (int co = 0; co < 64; ++co)
    for (int oy = 0; oy < 32; ++oy)
      for (int ox = 0; ox < 32; ++ox)
        for (int ci = 0; ci < 3; ++ci)
          for (int t = 0; t < 9; ++t) macs += 1.0;
  EXPECT_DOUBLE_EQ(c.flops, 2.0 * macs);
  EXPECT_DOUBLE_EQ(c.flops, 3538944.0);
  EXPECT_DOUBLE_EQ(c.out_bytes, 64.0 * 32 * 32 * 4);
}

TEST(EstimateOpCost, LossReportsScalarOutput) {
  auto node = make_node("ce", OpType::kLossFunction, "cross_entropy", {"logits", "y"});
  OpCost c = estimate_op_cost(node, {batched({10}), batched({})}, 8);
  EXPECT_DOUBLE_EQ(c.flops, 5.0 * 8 * 10);
  EXPECT_DOUBLE_EQ(c.out_bytes, 4.0);
}

TEST(EstimateOpCost, MissingShapeAttr) {
  auto node = make_node("fc", OpType::kParametricOp, "linear", {"x"});
  try {
    estimate_op_cost(node, {batched({4})}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingShapeAttr);
  }
}

TEST(EstimateCosts, VariablesHoldParametersNotActivations) {
  auto costs = estimate_costs(testing::fig3_dag(), 2);
  EXPECT_DOUBLE_EQ(costs.at("TensorA").param_bytes, 4.0 * 8 * 8 * 4);
  EXPECT_DOUBLE_EQ(costs.at("TensorA").acti_bytes, 0.0);
  EXPECT_DOUBLE_EQ(costs.at("Conv").out_bytes, 2.0 * 4 * 8 * 8 * 4);
  EXPECT_DOUBLE_EQ(costs.at("Input").flops, 0.0);
}

TEST(ComputeTime, ReferenceDevice) {
  DeviceProfile rtx{.id = 0, .name = "rtx4090", .peak_flops = 165.16e12, .lambda = 1.0};
  EXPECT_NEAR(compute_time(1e12, rtx), 6.055e-3, 1e-6);
  EXPECT_EQ(compute_time(0.0, rtx), 0.0);
  rtx.lambda = 0.5;
  EXPECT_NEAR(compute_time(1e12, rtx), 1.211e-2, 1e-5);
}

TEST(ComputeTime, Homogeneous) {
  DeviceProfile d{.id = 0, .peak_flops = 3e9, .lambda = 0.25};
  double t = compute_time(7e6, d);
  EXPECT_DOUBLE_EQ(compute_time(14e6, d), 2.0 * t);
  d.lambda = 0.5;
  EXPECT_DOUBLE_EQ(compute_time(7e6, d), t / 2.0);
}

TEST(CommTime, AlphaBeta) {
  LinkProfile l{0, 1, 0.1, 1e-6};
  EXPECT_DOUBLE_EQ(comm_time(l, 1e6), 1.1);
  EXPECT_DOUBLE_EQ(comm_time(l, 0.0), 0.1);
  EXPECT_EQ(comm_time(LinkProfile{2, 2, 0.1, 1e-6}, 1e9), 0.0);
  // Affine: three equally spaced sizes give equal increments.
  double a = comm_time(l, 10.0), b = comm_time(l, 20.0), c = comm_time(l, 30.0);
  EXPECT_NEAR(b - a, c - b, 1e-15);
}

TEST(NetworkGraph, RequiresEveryOrderedPair) {
  std::vector<DeviceProfile> devices{{.id = 0, .peak_flops = 1.0}, {.id = 1, .peak_flops = 1.0}};
  try {
    NetworkGraph g(devices, {{0, 1, 0.0, 1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing link 1->0"), std::string::npos) << e.what();
  }
}

TEST(OpTotalTime, RemoteParentsAddTheirLinks) {
  // One remote parent: alpha 0.1, beta 1e-6, M 1e6, compute 0.5.
  OpDag dag = build_dag({make_node("p", OpType::kVariable, "tensor", {}, {}, {1}),
                         make_node("q", OpType::kVariable, "tensor", {}, {}, {1}),
                         make_node("s", OpType::kNonParametricOp, "add", {"p", "q"})});
  CostTable costs{{"p", {.out_bytes = 1e6}}, {"q", {.out_bytes = 2e6}}, {"s", {.flops = 0.5e12}}};
  std::vector<DeviceProfile> devices{{.id = 0, .peak_flops = 1e12}, {.id = 1, .peak_flops = 1e12},
                                     {.id = 2, .peak_flops = 1e12}};
  std::vector<LinkProfile> links;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) links.push_back({i, j, 0.1 * (1 + i), 1e-6});
  NetworkGraph net(devices, links);
  EXPECT_DOUBLE_EQ(op_total_time(dag, "s", costs, {{"p", 2}, {"q", 2}, {"s", 2}}, net), 0.5);
  EXPECT_DOUBLE_EQ(op_total_time(dag, "s", costs, {{"p", 0}, {"q", 2}, {"s", 2}}, net), 1.6);
  // Two remote parents on different links: 0.5 + (0.1 + 1) + (0.2 + 2).
  EXPECT_DOUBLE_EQ(op_total_time(dag, "s", costs, {{"p", 0}, {"q", 1}, {"s", 2}}, net), 3.8);
  try {
    op_total_time(dag, "s", costs, {{"p", 0}, {"s", 2}}, net);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnassignedNode);
  }
}

TEST(OpTotalTime, ExampleAddNodeSumsBothRemoteParents) {
  OpDag dag = testing::fig3_dag();
  auto costs = estimate_costs(dag, 4);
  auto net = testing::uniform_network(4, 0.01, 1e-8);
  auto a = testing::fig3_assignment();
  double expected = compute_time(costs.at("Add"), net.device(3)) + (0.01 + 1e-8 * costs.at("Conv").out_bytes) +
                    (0.01 + 1e-8 * costs.at("ReLu").out_bytes);
  EXPECT_DOUBLE_EQ(op_total_time(dag, "Add", costs, a, net), expected);
  for (auto& [_, d] : a) d = 0;
  for (const auto& [name, _] : dag.nodes()) {
    EXPECT_DOUBLE_EQ(op_total_time(dag, name, costs, a, net), compute_time(costs.at(name), net.device(0)));
  }
}

TEST(FitLambda, RecoversNoiselessFactor) {
  DeviceProfile d{.id = 0, .peak_flops = 2e12};
  std::vector<ProfileSample> s;
  for (double f : {1e9, 5e9, 2e10, 7e10}) s.push_back({f, f / (0.7 * d.peak_flops)});
  EXPECT_NEAR(fit_lambda(s, d), 0.7, 0.7 * 1e-9);
}

TEST(FitLambda, ClampsAtOne) {
  DeviceProfile d{.id = 0, .peak_flops = 1e12};
  std::vector<ProfileSample> s{{1e9, 1e-4}, {2e9, 2e-4}};
  EXPECT_EQ(fit_lambda(s, d), 1.0);
}

TEST(FitLambda, NoisySamplesStayClose) {
  DeviceProfile d{.id = 0, .peak_flops = 1e12};
  std::mt19937_64 rng(42);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<ProfileSample> s;
  for (int i = 1; i <= 50; ++i) {
    double f = 1e9 * i;
    s.push_back({f, f / (0.5 * d.peak_flops) * (1.0 + noise(rng))});
  }
  double l = fit_lambda(s, d);
  EXPECT_GE(l, 0.45);
  EXPECT_LE(l, 0.55);
}

TEST(FitLambda, Errors) {
  DeviceProfile d{.id = 0, .peak_flops = 1e12};
  std::vector<ProfileSample> one{{1e9, 1.0}};
  std::vector<ProfileSample> zero{{0.0, 1.0}, {0.0, 2.0}};
  try {
    fit_lambda(one, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientSamples);
  }
  try {
    fit_lambda(zero, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateFit);
  }
}

TEST(FitLambda, LoadsCsvWithHeader) {
  auto path = std::filesystem::temp_directory_path() / "geotrain_profile.csv";
  {
    std::ofstream out(path);
    out << "flops,seconds\n1e9,0.002\n3e9,0.006\n";
  }
  auto s = load_profile_samples_csv(path);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[1].flops, 3e9);
  EXPECT_NEAR(fit_lambda(s, {.id = 0, .peak_flops = 1e12}), 0.5, 1e-12);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace geotrain
