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

#include <algorithm>
#include <random>

#include "geotrain/error.hpp"
#include "geotrain/opdag.hpp"
#include "test_support.hpp"

namespace geotrain {
namespace {

using testing::fig3_assignment;
using testing::fig3_dag;
using testing::fig3_nodes;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

TEST(BuildDag, ExampleGraphHasEightNodesAndSevenEdges) {
  OpDag dag = fig3_dag();
  EXPECT_EQ(dag.size(), 8u);
  std::set<Edge> expected{{"Input", "Conv"}, {"TensorA", "ReLu"}, {"ReLu", "Add"}, {"Conv", "Add"},
                          {"Add", "Linear"}, {"Label", "CE"},      {"Linear", "CE"}};
  EXPECT_EQ(dag.fp_edges(), expected);
}

TEST(BuildDag, SinglePlaceholderIsValid) {
  OpDag dag = build_dag({make_node("x", OpType::kPlaceholder, "input", {}, {}, {2})});
  EXPECT_EQ(dag.size(), 1u);
  EXPECT_TRUE(dag.fp_edges().empty());
}

TEST(BuildDag, SelfLoopIsACycle) {
  auto e = code_of([] { build_dag({make_node("a", OpType::kNonParametricOp, "relu", {"a"})}); });
  EXPECT_EQ(e, ErrorCode::kCycleDetected);
}

TEST(BuildDag, CycleMessageListsTheCycle) {
  try {
    build_dag({make_node("a", OpType::kNonParametricOp, "relu", {"b"}),
               make_node("b", OpType::kNonParametricOp, "relu", {"a"})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCycleDetected);
    std::string what = e.what();
    EXPECT_NE(what.find("a -> b -> a"), std::string::npos) << what;
  }
}

TEST(BuildDag, RejectsDuplicatesAndUnknownArgs) {
  EXPECT_EQ(code_of([] {
              build_dag({make_node("x", OpType::kPlaceholder, "input", {}, {}, {1}),
                         make_node("x", OpType::kPlaceholder, "input", {}, {}, {1})});
            }),
            ErrorCode::kDuplicateName);
  EXPECT_EQ(code_of([] { build_dag({make_node("r", OpType::kNonParametricOp, "relu", {"ghost"})}); }),
            ErrorCode::kUnknownArgReference);
}

TEST(BuildDag, LeavesHaveNoArgsAndLossesAreSinks) {
  EXPECT_EQ(code_of([] {
              build_dag({make_node("x", OpType::kPlaceholder, "input", {}, {}, {1}),
                         make_node("v", OpType::kVariable, "tensor", {"x"}, {}, {1})});
            }),
            ErrorCode::kInvalidDag);
  auto nodes = fig3_nodes();
  nodes.push_back(make_node("after", OpType::kNonParametricOp, "relu", {"CE"}));
  EXPECT_EQ(code_of([&] { build_dag(nodes); }), ErrorCode::kInvalidDag);
  auto dangling = fig3_nodes();
  dangling.push_back(make_node("dangling", OpType::kNonParametricOp, "relu", {"Add"}));
  EXPECT_EQ(code_of([&] { build_dag(dangling); }), ErrorCode::kInvalidDag);
}

TEST(TopologicalOrder, ExampleGraphRespectsEdges) {
  OpDag dag = fig3_dag();
  auto order = topological_order(dag);
  auto pos = [&](const std::string& n) { return std::find(order.begin(), order.end(), n) - order.begin(); };
  EXPECT_LT(pos("Conv"), pos("Add"));
  EXPECT_LT(pos("ReLu"), pos("Add"));
  EXPECT_LT(pos("Add"), pos("Linear"));
  EXPECT_LT(pos("Linear"), pos("CE"));
  EXPECT_LT(pos("Label"), pos("CE"));
}

TEST(TopologicalOrder, ChainAndTieBreak) {
  OpDag chain = build_dag({make_node("a", OpType::kPlaceholder, "input", {}, {}, {1}),
                           make_node("b", OpType::kNonParametricOp, "relu", {"a"}),
                           make_node("c", OpType::kNonParametricOp, "relu", {"b"})});
  EXPECT_EQ(topological_order(chain), (std::vector<std::string>{"a", "b", "c"}));
  OpDag pair = build_dag({make_node("b", OpType::kPlaceholder, "input", {}, {}, {1}),
                          make_node("a", OpType::kPlaceholder, "input", {}, {}, {1})});
  EXPECT_EQ(topological_order(pair), (std::vector<std::string>{"a", "b"}));
}

TEST(TopologicalOrder, IsAPermutationRespectingEveryEdgeOnRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    OpDag dag = build_dag(testing::random_dag(rng, 14));
    auto order = topological_order(dag);
    ASSERT_EQ(order.size(), dag.size());
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    ASSERT_EQ(pos.size(), dag.size());
    for (const auto& e : dag.fp_edges()) EXPECT_LT(pos.at(e.from), pos.at(e.to));
  }
}

TEST(BpEdges, ExampleGraphSkipsNonGradientLeaves) {
  auto bp = derive_bp_edges(fig3_dag());
  std::set<Edge> expected{{"CE", "Linear"}, {"Linear", "Add"}, {"Add", "Conv"}, {"Add", "ReLu"}, {"ReLu", "TensorA"}};
  EXPECT_EQ(bp, expected);
}

TEST(BpEdges, PlaceholderIntoLossHasNoGradientEdge) {
  OpDag dag = build_dag({make_node("logits", OpType::kPlaceholder, "input", {}, {}, {3}),
                         make_node("y", OpType::kPlaceholder, "label"),
                         make_node("loss", OpType::kLossFunction, "cross_entropy", {"logits", "y"})});
  EXPECT_TRUE(derive_bp_edges(dag).empty());
}

TEST(BpEdges, VariableReceivesGradient) {
  OpDag dag = build_dag({make_node("v", OpType::kVariable, "tensor", {}, {}, {3}),
                         make_node("r", OpType::kNonParametricOp, "relu", {"v"})});
  EXPECT_TRUE(derive_bp_edges(dag).contains(Edge{"r", "v"}));
}

TEST(BpEdges, SubsetOfReversedForwardEdges) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    OpDag dag = build_dag(testing::random_dag(rng, 12));
    auto bp = derive_bp_edges(dag);
    bool has_non_grad_leaf_edge = false;
    for (const auto& e : dag.fp_edges()) has_non_grad_leaf_edge |= !dag.node(e.from).requires_grad;
    std::set<Edge> reversed;
    for (const auto& e : dag.fp_edges()) reversed.insert({e.to, e.from});
    for (const auto& e : bp) EXPECT_TRUE(reversed.contains(e));
    EXPECT_EQ(bp == reversed, !has_non_grad_leaf_edge);
  }
}

TEST(Boundaries, ReproducesExampleTable) {
  auto boundaries = compute_boundaries(fig3_dag(), fig3_assignment());
  ASSERT_EQ(boundaries.size(), 3u);
  const auto& b1 = boundaries[0];
  const auto& b2 = boundaries[1];
  const auto& b3 = boundaries[2];
  EXPECT_EQ(b1.device, 1);
  EXPECT_TRUE(b1.required_acti.empty());
  EXPECT_EQ(b1.send_acti, (std::vector<Edge>{{"Conv", "Add"}}));
  EXPECT_EQ(b1.required_grad, (std::vector<std::string>{"Conv-Add"}));
  EXPECT_TRUE(b1.send_grad.empty());

  EXPECT_TRUE(b2.required_acti.empty());
  EXPECT_EQ(b2.send_acti, (std::vector<Edge>{{"ReLu", "Add"}}));
  EXPECT_EQ(b2.required_grad, (std::vector<std::string>{"ReLu-Add"}));
  EXPECT_TRUE(b2.send_grad.empty());

  std::set<Edge> req3(b3.required_acti.begin(), b3.required_acti.end());
  EXPECT_EQ(req3, (std::set<Edge>{{"Conv", "Add"}, {"ReLu", "Add"}}));
  EXPECT_TRUE(b3.send_acti.empty());
  EXPECT_TRUE(b3.required_grad.empty());
  std::set<std::string> send3(b3.send_grad.begin(), b3.send_grad.end());
  EXPECT_EQ(send3, (std::set<std::string>{"Conv-Add", "ReLu-Add"}));
}

TEST(Boundaries, SingleDeviceHasEmptyLists) {
  Assignment a;
  for (const auto& n : fig3_nodes()) a[n.name] = 0;
  auto b = compute_boundaries(fig3_dag(), a);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_TRUE(b[0].required_acti.empty() && b[0].send_acti.empty() && b[0].required_grad.empty() &&
              b[0].send_grad.empty());
}

TEST(Boundaries, SingleCutEdge) {
  OpDag dag = build_dag({make_node("a", OpType::kVariable, "tensor", {}, {}, {2}),
                         make_node("b", OpType::kNonParametricOp, "relu", {"a"})});
  auto b = compute_boundaries(dag, {{"a", 1}, {"b", 2}});
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].send_acti, (std::vector<Edge>{{"a", "b"}}));
  EXPECT_EQ(b[1].required_acti, (std::vector<Edge>{{"a", "b"}}));
  EXPECT_EQ(b[1].send_grad, (std::vector<std::string>{"a-b"}));
  EXPECT_EQ(b[0].required_grad, (std::vector<std::string>{"a-b"}));
}

TEST(Boundaries, UnassignedNodeIsRejected) {
  auto a = fig3_assignment();
  a.erase("Linear");
  EXPECT_EQ(code_of([&] { compute_boundaries(fig3_dag(), a); }), ErrorCode::kUnassignedNode);
}

TEST(Boundaries, SendAndRequireListsPairUpOnRandomAssignments) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    OpDag dag = build_dag(testing::random_dag(rng, 12));
    Assignment a = testing::random_assignment(dag, 4, rng);
    auto boundaries = compute_boundaries(dag, a);
    std::multiset<Edge> sent, required;
    std::multiset<std::string> gsent, grequired;
    for (const auto& b : boundaries) {
      sent.insert(b.send_acti.begin(), b.send_acti.end());
      required.insert(b.required_acti.begin(), b.required_acti.end());
      gsent.insert(b.send_grad.begin(), b.send_grad.end());
      grequired.insert(b.required_grad.begin(), b.required_grad.end());
    }
    std::multiset<Edge> crossing;
    std::multiset<std::string> crossing_grad;
    for (const auto& e : dag.fp_edges()) {
      if (a.at(e.from) == a.at(e.to)) continue;
      crossing.insert(e);
      if (dag.node(e.from).requires_grad) crossing_grad.insert(grad_label(e));
    }
    EXPECT_EQ(sent, required);
    EXPECT_EQ(sent, crossing);
    EXPECT_EQ(gsent, grequired);
    EXPECT_EQ(gsent, crossing_grad);
  }
}

TEST(Shapes, ExampleGraph) {
  auto shapes = infer_shapes(fig3_dag());
  EXPECT_EQ(shapes.at("Conv").dims, (std::vector<std::int64_t>{4, 8, 8}));
  EXPECT_TRUE(shapes.at("Conv").batched);
  EXPECT_FALSE(shapes.at("TensorA").batched);
  EXPECT_EQ(shapes.at("Linear").dims, (std::vector<std::int64_t>{10}));
  EXPECT_EQ(shapes.at("CE").per_sample_elements(), 1);
}

TEST(Shapes, MissingAttributesAndMismatches) {
  EXPECT_EQ(code_of([] {
              infer_shapes(build_dag({make_node("x", OpType::kPlaceholder, "input", {}, {}, {4}),
                                      make_node("fc", OpType::kParametricOp, "linear", {"x"})}));
            }),
            ErrorCode::kMissingShapeAttr);
  EXPECT_EQ(code_of([] {
              infer_shapes(build_dag({make_node("x", OpType::kPlaceholder, "input", {}, {}, {4}),
                                      make_node("z", OpType::kPlaceholder, "input", {}, {}, {5}),
                                      make_node("s", OpType::kNonParametricOp, "add", {"x", "z"})}));
            }),
            ErrorCode::kShapeMismatch);
}

}  // namespace
}  // namespace geotrain
