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

#include <cmath>
#include <random>

#include "geotrain/error.hpp"
#include "geotrain/tensor_ops.hpp"
#include "test_support.hpp"

namespace geotrain {
namespace {

// Weighted sum of the op output: a scalar whose gradient w.r.t. the output
// is the fixed random tensor used as upstream.
double probe(std::string_view kind, const std::vector<Tensor>& in, const std::vector<Tensor>& params,
             const OpAttrs& attrs, const Tensor& weights) {
  Tensor out = forward_op(kind, in, params, attrs);
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * weights.data[i];
  return s;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double scale = 0.0;
  for (double v : analytic.data) scale = std::max(scale, std::abs(v));
  return testing::max_abs_diff(analytic, numeric) / (scale + 1e-8);
}

void check_gradients(std::string_view kind, std::vector<Tensor> in, std::vector<Tensor> params, const OpAttrs& attrs,
                     const std::vector<bool>& differentiable, std::mt19937_64& rng) {
  Tensor out = forward_op(kind, in, params, attrs);
  Tensor up = testing::random_tensor(out.shape, rng);
  auto g = backward_op(kind, up, in, params, attrs);
  ASSERT_EQ(g.inputs.size(), in.size());
  ASSERT_EQ(g.params.size(), params.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!differentiable[i]) {
      EXPECT_TRUE(g.inputs[i].empty());
      continue;
    }
    auto f = [&](const Tensor& x) {
      auto copy = in;
      copy[i] = x;
      return probe(kind, copy, params, attrs, up);
    };
    EXPECT_LT(relative_error(g.inputs[i], testing::numeric_gradient(f, in[i], 1e-5)), 1e-6) << kind << " input " << i;
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto f = [&](const Tensor& w) {
      auto copy = params;
      copy[p] = w;
      return probe(kind, in, copy, attrs, up);
    };
    EXPECT_LT(relative_error(g.params[p], testing::numeric_gradient(f, params[p], 1e-5)), 1e-6) << kind << " param " << p;
  }
}

Tensor away_from_zero(Tensor t) {
  for (auto& v : t.data) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

TEST(ForwardOp, Examples) {
  Tensor a({1, 2}, {1, 2}), b({1, 2}, {3, 4});
  EXPECT_EQ(forward_op("add", std::vector<Tensor>{a, b}, {}), Tensor({1, 2}, {4, 6}));
  EXPECT_EQ(forward_op("relu", std::vector<Tensor>{Tensor({3}, {-1, 0, 2})}, {}), Tensor({3}, {0, 0, 2}));
  Tensor ce = forward_op("cross_entropy", std::vector<Tensor>{Tensor({1, 2}, {0, 0}), Tensor({1}, {0})}, {});
  EXPECT_NEAR(ce.data.at(0), std::log(2.0), 1e-15);
  Tensor row({1, 2}, {10, 20});
  EXPECT_EQ(forward_op("add", std::vector<Tensor>{Tensor({3, 2}, {1, 1, 2, 2, 3, 3}), row}, {}),
            Tensor({3, 2}, {11, 21, 12, 22, 13, 23}));
}

TEST(ForwardOp, LinearMatchesMatrixProduct) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w({2, 3}, {1, 0, -1, 2, 1, 0});
  Tensor bias({2}, {0.5, -0.5});
  EXPECT_EQ(forward_op("linear", std::vector<Tensor>{x}, std::vector<Tensor>{w, bias}),
            Tensor({2, 2}, {-1.5, 3.5, -1.5, 12.5}));
}

TEST(ForwardOp, ShapeErrors) {
  try {
    forward_op("add", std::vector<Tensor>{Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 3}, {1, 2, 3, 4, 5, 6})}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  try {
    forward_op("linear", std::vector<Tensor>{Tensor({1, 3}, {1, 2, 3})},
               std::vector<Tensor>{Tensor::zeros({2, 4}), Tensor::zeros({2})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
  try {
    forward_op("cross_entropy", std::vector<Tensor>{Tensor({1, 2}, {0, 0}), Tensor({1}, {2})}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(BackwardOp, Examples) {
  auto g = backward_op("relu", Tensor({2}, {5, 5}), std::vector<Tensor>{Tensor({2}, {-1, 2})}, {});
  EXPECT_EQ(g.inputs.at(0), Tensor({2}, {0, 5}));

  Tensor x({1, 3}, {1, 2, 3});
  auto lg = backward_op("linear", Tensor({1, 2}, {1, 1}), std::vector<Tensor>{x},
                        std::vector<Tensor>{Tensor::zeros({2, 3}), Tensor::zeros({2})});
  EXPECT_EQ(lg.params.at(0), Tensor({2, 3}, {1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(lg.params.at(1), Tensor({2}, {1, 1}));
}

TEST(BackwardOp, FiniteDifferencesForEveryKind) {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 5; ++rep) {
    check_gradients("linear", {testing::random_tensor({3, 4}, rng)},
                    {testing::random_tensor({5, 4}, rng), testing::random_tensor({5}, rng)}, {{"out", 5}}, {true}, rng);
    check_gradients("linear", {testing::random_tensor({2, 2, 3}, rng)},
                    {testing::random_tensor({3, 6}, rng), testing::random_tensor({3}, rng)}, {{"out", 3}}, {true}, rng);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
      OpAttrs attrs{{"out_channels", 3}, {"kernel_size", 3}, {"stride", stride}, {"padding", pad}};
      check_gradients("conv2d", {testing::random_tensor({2, 2, 5, 5}, rng)},
                      {testing::random_tensor({3, 2, 3, 3}, rng), testing::random_tensor({3}, rng)}, attrs, {true}, rng);
    }
    check_gradients("relu", {away_from_zero(testing::random_tensor({4, 3}, rng))}, {}, {}, {true}, rng);
    check_gradients("add", {testing::random_tensor({3, 4}, rng), testing::random_tensor({3, 4}, rng)}, {}, {},
                    {true, true}, rng);
    check_gradients("add", {testing::random_tensor({3, 4}, rng), testing::random_tensor({1, 4}, rng)}, {}, {},
                    {true, true}, rng);
    check_gradients("tensor", {}, {testing::random_tensor({1, 2, 3}, rng)}, {}, {}, rng);
    Tensor labels({4}, {0, 2, 1, 2});
    check_gradients("cross_entropy", {testing::random_tensor({4, 3}, rng, -3, 3), labels}, {}, {}, {true, false}, rng);
  }
}

TEST(BackwardOp, PlaceholdersPassNoGradient) {
  Tensor x({2}, {1, 2});
  EXPECT_EQ(forward_op("input", std::vector<Tensor>{x}, {}), x);
  auto g = backward_op("input", x, std::vector<Tensor>{x}, {});
  ASSERT_EQ(g.inputs.size(), 1u);
  EXPECT_TRUE(g.inputs[0].empty());
}

TEST(TensorType, Basics) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), Error);
  Tensor t({3, 2}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(slice_rows(t, 1, 3), Tensor({2, 2}, {3, 4, 5, 6}));
  EXPECT_TRUE(t.all_finite());
  t.data[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_EQ(Tensor::scalar(2.5).numel(), 1u);
}

}  // namespace
}  // namespace geotrain
