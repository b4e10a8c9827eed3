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

// Top-K sparsification and adaptive per-link ratio assignment.
//
// A payload keeps the k = max(1, floor(d / ratio)) largest-magnitude entries
// of a dense vector. Equal magnitudes keep the lower index. Values are stored
// in ascending index order. On the wire each kept element costs a 32-bit
// value plus a 64-bit index, three times the dense per-element cost.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "geotrain/costmodel.hpp"
#include "geotrain/error.hpp"

namespace geotrain {

inline constexpr std::int64_t kIndexBytes = 8;
inline constexpr std::int64_t kSparseElementBytes = kElementBytes + kIndexBytes;

template <std::floating_point T>
struct BasicSparsePayload {
  std::vector<T> values;
  std::vector<std::uint64_t> indices;
  std::uint64_t original_len = 0;
  double ratio_used = 1.0;  // d / k

  std::size_t k() const noexcept { return values.size(); }
  /// Bytes of values + indices, excluding the length header.
  std::int64_t payload_bytes() const noexcept { return static_cast<std::int64_t>(k()) * kSparseElementBytes; }
};

using SparsePayload = BasicSparsePayload<float>;

inline std::uint64_t topk_count(std::uint64_t d, double ratio) {
  if (!(ratio >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "compression ratio must be >= 1");
  auto k = static_cast<std::uint64_t>(std::floor(static_cast<double>(d) / ratio));
  return std::max<std::uint64_t>(1, std::min(k, d));
}

template <std::floating_point T>
BasicSparsePayload<T> topk_compress(std::span<const T> vector, double ratio) {
  if (vector.empty()) throw Error(ErrorCode::kEmptyVector, "cannot compress an empty vector");
  for (T v : vector) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "cannot compress non-finite values");
  }
  const std::uint64_t d = vector.size();
  const std::uint64_t k = topk_count(d, ratio);

  std::vector<std::uint64_t> order(d);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  auto stronger = [&](std::uint64_t a, std::uint64_t b) {
    T ma = std::abs(vector[a]);
    T mb = std::abs(vector[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (k < d) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), stronger);
    order.resize(k);
  }
  std::sort(order.begin(), order.end());

  BasicSparsePayload<T> out;
  out.original_len = d;
  out.ratio_used = static_cast<double>(d) / static_cast<double>(k);
  out.indices = std::move(order);
  out.values.reserve(k);
  for (auto i : out.indices) out.values.push_back(vector[i]);
  return out;
}

template <std::floating_point T>
std::vector<T> topk_decompress(const BasicSparsePayload<T>& payload) {
  if (payload.values.size() != payload.indices.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "values and indices differ in length");
  }
  std::vector<T> out(payload.original_len, T{0});
  for (std::size_t i = 0; i < payload.indices.size(); ++i) {
    auto idx = payload.indices[i];
    if (idx >= payload.original_len) {
      throw Error(ErrorCode::kIndexOutOfRange,
                  "index " + std::to_string(idx) + " >= length " + std::to_string(payload.original_len));
    }
    out[idx] = payload.values[i];
  }
  return out;
}

/// Wire bytes of a Top-K payload of a length-d vector (header excluded).
std::int64_t wire_bytes(std::int64_t d, double ratio);
inline std::int64_t dense_wire_bytes(std::int64_t d) { return d * kElementBytes; }
/// Wire size of a message of dense_bytes once Top-K compressed at ratio.
double compressed_message_bytes(double dense_bytes, double ratio);

/// Little-endian {d: u64, k: u64}, k x u64 indices, k x f32 values.
std::vector<std::uint8_t> encode_sparse(const SparsePayload& payload);
SparsePayload decode_sparse(std::span<const std::uint8_t> bytes);

struct CompressionPlan {
  double base_ratio = 1.0;
  std::map<LinkKey, double> link_ratios;
  std::map<LinkKey, double> link_times;  // estimates the ratios were derived from
};

/// r_l = max(1, 3 r R_l / max_l' R_l') for every link.
CompressionPlan adatopk_plan(const std::map<LinkKey, double>& link_times, double base_ratio);

/// r_l = 3 r on every link: each link moves 1/r of its dense bytes.
CompressionPlan uniform_plan(const std::map<LinkKey, double>& link_times, double base_ratio);

}  // namespace geotrain
