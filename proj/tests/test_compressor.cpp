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

#include "geotrain/compressor.hpp"
#include "geotrain/error.hpp"
#include "test_support.hpp"

namespace geotrain {
namespace {

template <class T>
BasicSparsePayload<T> compress(const std::vector<T>& v, double ratio) {
  return topk_compress<T>(std::span<const T>(v), ratio);
}

TEST(TopK, KeepsLargestMagnitudes) {
  auto p = compress<float>({0.1f, -5.0f, 3.0f, 0.0f}, 2);
  EXPECT_EQ(p.indices, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(p.values, (std::vector<float>{-5.0f, 3.0f}));
  EXPECT_EQ(topk_decompress(p), (std::vector<float>{0.0f, -5.0f, 3.0f, 0.0f}));
  EXPECT_DOUBLE_EQ(p.ratio_used, 2.0);
}

TEST(TopK, RatioOneIsIdentity) {
  std::vector<float> v{3, -1, 4, -1, 5, -9, 2, 6};
  auto p = compress(v, 1);
  EXPECT_EQ(p.k(), v.size());
  EXPECT_EQ(topk_decompress(p), v);
}

TEST(TopK, TiesKeepLowerIndex) {
  auto p = compress<float>({2.0f, -2.0f, 1.0f}, 3);
  EXPECT_EQ(p.indices, (std::vector<std::uint64_t>{0}));
}

TEST(TopK, ZerosStayZeros) {
  std::vector<float> z(8, 0.0f);
  EXPECT_EQ(topk_decompress(compress(z, 4)), z);
}

TEST(TopK, Errors) {
  try {
    compress<float>({}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyVector);
  }
  try {
    compress<float>({1.0f}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidRatio);
  }
  SparsePayload bad{{1.0f}, {5}, 3, 3.0};
  try {
    topk_decompress(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndexOutOfRange);
  }
}

TEST(TopK, MatchesBruteForceSubsetSelection) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> small(-4, 4);
  std::uniform_real_distribution<double> real(-10.0, 10.0);
  for (int t = 0; t < 3000; ++t) {
    std::size_t d = 1 + rng() % 12;
    std::vector<double> v(d);
    bool ties = t % 2 == 0;
    for (auto& x : v) x = ties ? small(rng) : real(rng);
    double ratio = 1.0 + static_cast<double>(rng() % 1300) / 100.0;
    auto p = compress(v, ratio);
    auto want = testing::brute_force_topk(v, topk_count(d, ratio));
    ASSERT_EQ(p.indices, want) << "case " << t;
  }
}

TEST(TopK, SupportIsExactAndErrorShrinksWithMoreKept) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(64);
    for (auto& x : v) x = g(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double ratio : {64.0, 16.0, 8.0, 4.0, 2.0, 1.0}) {
      auto p = compress(v, ratio);
      auto back = topk_decompress(p);
      double err = 0.0;
      std::set<std::uint64_t> kept(p.indices.begin(), p.indices.end());
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (kept.contains(i)) EXPECT_EQ(back[i], v[i]);
        else EXPECT_EQ(back[i], 0.0);
        err += (v[i] - back[i]) * (v[i] - back[i]);
      }
      EXPECT_LE(err, prev);
      prev = err;
    }
  }
}

TEST(WireBytes, Examples) {
  EXPECT_EQ(wire_bytes(100, 100), 12);
  EXPECT_EQ(dense_wire_bytes(100), 400);
  EXPECT_NEAR(static_cast<double>(dense_wire_bytes(100)) / wire_bytes(100, 100), 100.0 / 3.0, 1e-12);
  EXPECT_EQ(wire_bytes(50, 1), 12 * 50);
  EXPECT_EQ(wire_bytes(1, 1000), 12);
}

TEST(WireBytes, MatchesEncodedPayload) {
  std::mt19937_64 rng(8);
  std::normal_distribution<float> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<float> v(1 + rng() % 300);
    for (auto& x : v) x = g(rng);
    double ratio = 1.0 + static_cast<double>(rng() % 50);
    auto p = compress(v, ratio);
    EXPECT_EQ(p.payload_bytes(), wire_bytes(static_cast<std::int64_t>(v.size()), ratio));
    auto bytes = encode_sparse(p);
    EXPECT_EQ(static_cast<std::int64_t>(bytes.size()), 16 + wire_bytes(static_cast<std::int64_t>(v.size()), ratio));
    auto back = decode_sparse(bytes);
    EXPECT_EQ(back.indices, p.indices);
    EXPECT_EQ(back.values, p.values);
    EXPECT_EQ(back.original_len, p.original_len);
  }
}

TEST(AdaTopK, Examples) {
  auto p = adatopk_plan({{{0, 1}, 10.0}, {{1, 2}, 5.0}, {{2, 3}, 1.0}}, 100);
  EXPECT_DOUBLE_EQ(p.link_ratios.at({0, 1}), 300.0);
  EXPECT_DOUBLE_EQ(p.link_ratios.at({1, 2}), 150.0);
  EXPECT_DOUBLE_EQ(p.link_ratios.at({2, 3}), 30.0);
  auto q = adatopk_plan({{{0, 1}, 10.0}, {{1, 0}, 0.01}}, 100);
  EXPECT_DOUBLE_EQ(q.link_ratios.at({0, 1}), 300.0);
  EXPECT_DOUBLE_EQ(q.link_ratios.at({1, 0}), 1.0);
  auto u = adatopk_plan({{{0, 1}, 2.0}, {{1, 2}, 2.0}}, 7);
  for (const auto& [_, r] : u.link_ratios) EXPECT_DOUBLE_EQ(r, 21.0);
  auto w = uniform_plan({{{0, 1}, 2.0}, {{1, 2}, 2.0}}, 7);
  EXPECT_EQ(u.link_ratios, w.link_ratios);
}

TEST(AdaTopK, NoCommunication) {
  try {
    adatopk_plan({{{0, 1}, 0.0}}, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoCommunication);
  }
}

TEST(AdaTopK, MonotoneWithArgmaxAtThreeR) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    std::map<LinkKey, double> times;
    int n = 1 + static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) times[{i, i + 1}] = u(rng) + 1e-9;
    double r = 1.0 + u(rng) * 40.0;
    auto plan = adatopk_plan(times, r);
    LinkKey argmax = times.begin()->first;
    for (const auto& [k, v] : times) {
      if (v > times.at(argmax)) argmax = k;
    }
    EXPECT_DOUBLE_EQ(plan.link_ratios.at(argmax), 3 * r);
    for (const auto& [a, ta] : times) {
      EXPECT_GE(plan.link_ratios.at(a), 1.0);
      for (const auto& [b, tb] : times) {
        if (ta <= tb) EXPECT_LE(plan.link_ratios.at(a), plan.link_ratios.at(b));
      }
    }
  }
}

}  // namespace
}  // namespace geotrain
