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

// OpData: the unit of inter-operator / inter-worker traffic.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "geotrain/compressor.hpp"
#include "geotrain/opdag.hpp"
#include "geotrain/tensor_ops.hpp"

namespace geotrain {

struct CompressConfig {
  std::string algorithm = "topk";
  double ratio = 1.0;
};

using DensePayload = std::vector<double>;
using Payload = std::variant<DensePayload, BasicSparsePayload<double>>;

/// Activations travel with name = producer and op_users = the consumers on
/// the receiving worker. Gradients travel with name = the arg node that
/// receives them and actual_op_user = the consumer that computed them.
struct OpData {
  std::string name;
  std::vector<std::string> op_users;
  std::string actual_op_user;
  bool is_loss = false;
  bool require_grad = false;
  std::uint64_t local_iter = 0;
  std::uint32_t micro_batch = 0;
  std::optional<CompressConfig> compress_cfg;
  std::vector<std::int64_t> shape;
  Payload payload;

  bool is_gradient() const noexcept { return !actual_op_user.empty(); }
  /// "Producer-Consumer" label of a gradient message.
  std::string edge_label() const { return name + "-" + actual_op_user; }
};

/// Packs a tensor, Top-K compressing it when a ratio is given.
OpData make_opdata(std::string name, const Tensor& value, std::optional<double> ratio);

/// Dense tensor carried by a message (decompressing sparse payloads).
Tensor unpack_tensor(const OpData& msg);

/// Dense f32 wire bytes of the carried tensor and the bytes actually framed.
std::int64_t dense_payload_bytes(const OpData& msg);
std::int64_t wire_payload_bytes(const OpData& msg);

/// Little-endian frame:
///   u32 name_len, name, u32 actual_user_len, actual_user,
///   u8 flags (bit0 is_loss, bit1 require_grad, bit2 compressed),
///   u64 local_iter, u32 micro_batch, u32 rank, rank x i64 dims,
///   then numel x f32 (dense) or the sparse payload layout.
/// op_users are not framed; the receiver resolves them from its sub-DAG.
std::vector<std::uint8_t> encode_frame(const OpData& msg);
OpData decode_frame(std::span<const std::uint8_t> bytes);

struct RouteTarget {
  bool local = false;
  DeviceId worker = 0;
};

/// Worker that must receive msg when sent from sender.
RouteTarget route_opdata(const OpData& msg, const Assignment& assignment, DeviceId sender);

}  // namespace geotrain
