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

#include "geotrain/compressor.hpp"

#include <bit>
#include <cstring>

namespace geotrain {

std::int64_t wire_bytes(std::int64_t d, double ratio) {
  if (d < 1) throw Error(ErrorCode::kEmptyVector, "length must be >= 1");
  return static_cast<std::int64_t>(topk_count(static_cast<std::uint64_t>(d), ratio)) * kSparseElementBytes;
}

double compressed_message_bytes(double dense_bytes, double ratio) {
  auto d = static_cast<std::int64_t>(std::ceil(dense_bytes / static_cast<double>(kElementBytes)));
  return static_cast<double>(wire_bytes(std::max<std::int64_t>(d, 1), ratio));
}

namespace {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <class T>
T take(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) throw Error(ErrorCode::kIndexOutOfRange, "truncated sparse payload");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_sparse(const SparsePayload& payload) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + static_cast<std::size_t>(payload.payload_bytes()));
  put<std::uint64_t>(out, payload.original_len);
  put<std::uint64_t>(out, payload.k());
  for (auto i : payload.indices) put<std::uint64_t>(out, i);
  for (auto v : payload.values) put<float>(out, v);
  return out;
}

SparsePayload decode_sparse(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  SparsePayload p;
  p.original_len = take<std::uint64_t>(bytes, offset);
  auto k = take<std::uint64_t>(bytes, offset);
  if (k == 0 || k > p.original_len) throw Error(ErrorCode::kIndexOutOfRange, "invalid k in sparse header");
  if (bytes.size() - offset != k * kSparseElementBytes) {
    throw Error(ErrorCode::kIndexOutOfRange, "sparse payload length does not match header");
  }
  p.indices.resize(k);
  p.values.resize(k);
  for (auto& i : p.indices) {
    i = take<std::uint64_t>(bytes, offset);
    if (i >= p.original_len) throw Error(ErrorCode::kIndexOutOfRange, "index beyond original length");
  }
  for (auto& v : p.values) v = take<float>(bytes, offset);
  p.ratio_used = static_cast<double>(p.original_len) / static_cast<double>(k);
  return p;
}

CompressionPlan adatopk_plan(const std::map<LinkKey, double>& link_times, double base_ratio) {
  if (!(base_ratio >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "base ratio must be >= 1");
  double max_time = 0.0;
  for (const auto& [_, t] : link_times) max_time = std::max(max_time, t);
  if (!(max_time > 0.0)) throw Error(ErrorCode::kNoCommunication, "no link carries any traffic");

  CompressionPlan plan;
  plan.base_ratio = base_ratio;
  plan.link_times = link_times;
  for (const auto& [key, t] : link_times) plan.link_ratios[key] = std::max(1.0, 3.0 * base_ratio * (t / max_time));
  return plan;
}

CompressionPlan uniform_plan(const std::map<LinkKey, double>& link_times, double base_ratio) {
  if (!(base_ratio >= 1.0)) throw Error(ErrorCode::kInvalidRatio, "base ratio must be >= 1");
  CompressionPlan plan;
  plan.base_ratio = base_ratio;
  plan.link_times = link_times;
  for (const auto& [key, _] : link_times) plan.link_ratios[key] = 3.0 * base_ratio;
  return plan;
}

}  // namespace geotrain
