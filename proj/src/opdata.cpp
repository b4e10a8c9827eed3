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

#include "geotrain/opdata.hpp"

#include <bit>
#include <cstring>

#include "geotrain/error.hpp"

namespace geotrain {

OpData make_opdata(std::string name, const Tensor& value, std::optional<double> ratio) {
  OpData msg;
  msg.name = std::move(name);
  msg.shape = value.shape;
  if (ratio) {
    msg.compress_cfg = CompressConfig{"topk", *ratio};
    msg.payload = topk_compress<double>(value.data, *ratio);
  } else {
    msg.payload = value.data;
  }
  return msg;
}

Tensor unpack_tensor(const OpData& msg) {
  if (const auto* dense = std::get_if<DensePayload>(&msg.payload)) return Tensor(msg.shape, *dense);
  const auto& sparse = std::get<BasicSparsePayload<double>>(msg.payload);
  if (static_cast<std::int64_t>(sparse.original_len) != shape_numel(msg.shape)) {
    throw Error(ErrorCode::kShapeMismatch, "sparse payload length does not match message shape");
  }
  return Tensor(msg.shape, topk_decompress(sparse));
}

std::int64_t dense_payload_bytes(const OpData& msg) { return shape_numel(msg.shape) * kElementBytes; }

std::int64_t wire_payload_bytes(const OpData& msg) {
  if (std::holds_alternative<DensePayload>(msg.payload)) return dense_payload_bytes(msg);
  return std::get<BasicSparsePayload<double>>(msg.payload).payload_bytes();
}

namespace {

static_assert(std::endian::native == std::endian::little, "wire encoding assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes.insert(bytes.end(), raw, raw + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <class T>
  T take() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  std::string take_string() {
    auto n = take<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
    offset_ += n;
    return s;
  }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(offset_); }

 private:
  void need(std::size_t n) const {
    if (offset_ + n > bytes_.size()) throw Error(ErrorCode::kIndexOutOfRange, "truncated OpData frame");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const OpData& msg) {
  Writer w;
  w.put_string(msg.name);
  w.put_string(msg.actual_op_user);
  const bool compressed = std::holds_alternative<BasicSparsePayload<double>>(msg.payload);
  w.put<std::uint8_t>(static_cast<std::uint8_t>((msg.is_loss ? 1 : 0) | (msg.require_grad ? 2 : 0) |
                                                (compressed ? 4 : 0)));
  w.put<std::uint64_t>(msg.local_iter);
  w.put<std::uint32_t>(msg.micro_batch);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(msg.shape.size()));
  for (auto d : msg.shape) w.put<std::int64_t>(d);
  if (compressed) {
    const auto& sparse = std::get<BasicSparsePayload<double>>(msg.payload);
    SparsePayload narrow;
    narrow.original_len = sparse.original_len;
    narrow.indices = sparse.indices;
    narrow.values.assign(sparse.values.begin(), sparse.values.end());
    auto body = encode_sparse(narrow);
    w.bytes.insert(w.bytes.end(), body.begin(), body.end());
  } else {
    for (double v : std::get<DensePayload>(msg.payload)) w.put<float>(static_cast<float>(v));
  }
  return std::move(w.bytes);
}

OpData decode_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  OpData msg;
  msg.name = r.take_string();
  msg.actual_op_user = r.take_string();
  auto flags = r.take<std::uint8_t>();
  msg.is_loss = flags & 1;
  msg.require_grad = flags & 2;
  msg.local_iter = r.take<std::uint64_t>();
  msg.micro_batch = r.take<std::uint32_t>();
  auto rank = r.take<std::uint32_t>();
  for (std::uint32_t i = 0; i < rank; ++i) msg.shape.push_back(r.take<std::int64_t>());
  if (flags & 4) {
    SparsePayload narrow = decode_sparse(r.rest());
    BasicSparsePayload<double> wide;
    wide.original_len = narrow.original_len;
    wide.indices = std::move(narrow.indices);
    wide.values.assign(narrow.values.begin(), narrow.values.end());
    wide.ratio_used = narrow.ratio_used;
    msg.compress_cfg = CompressConfig{"topk", wide.ratio_used};
    msg.payload = std::move(wide);
  } else {
    auto n = static_cast<std::size_t>(shape_numel(msg.shape));
    if (r.rest().size() != n * sizeof(float)) throw Error(ErrorCode::kIndexOutOfRange, "dense payload length mismatch");
    DensePayload dense(n);
    for (auto& v : dense) v = r.take<float>();
    msg.payload = std::move(dense);
  }
  return msg;
}

RouteTarget route_opdata(const OpData& msg, const Assignment& assignment, DeviceId sender) {
  auto owner = [&](const std::string& op) {
    auto it = assignment.find(op);
    if (it == assignment.end()) throw Error(ErrorCode::kUnknownConsumer, "no worker owns '" + op + "'");
    return it->second;
  };
  DeviceId target;
  if (msg.is_gradient()) {
    target = owner(msg.name);
  } else {
    if (msg.op_users.empty()) throw Error(ErrorCode::kUnknownConsumer, "activation '" + msg.name + "' has no users");
    target = owner(msg.op_users.front());
    for (const auto& u : msg.op_users) {
      if (owner(u) != target) {
        throw Error(ErrorCode::kUnknownConsumer, "activation '" + msg.name + "' lists users on several workers");
      }
    }
  }
  return RouteTarget{target == sender, target};
}

}  // namespace geotrain
