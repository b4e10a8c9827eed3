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

// Dense f64 tensors and the forward/backward kernels of the supported
// operator kinds: placeholder, variable, linear, conv2d, relu, add,
// cross_entropy.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geotrain {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_, std::vector<double> data_);
  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor scalar(double value);

  std::size_t numel() const noexcept { return data.size(); }
  std::int64_t rows() const noexcept { return shape.empty() ? 1 : shape.front(); }
  bool empty() const noexcept { return data.empty() && shape.empty(); }
  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;
};

std::int64_t shape_numel(std::span<const std::int64_t> shape);

/// Rows [begin, end) along the leading dimension.
Tensor slice_rows(const Tensor& t, std::int64_t begin, std::int64_t end);

using OpAttrs = std::map<std::string, std::int64_t>;

/// Parameter shapes owned by an operator given its input shapes.
/// linear: W [out, in], b [out]; conv2d: W [cout, cin, k, k], b [cout];
/// variable: value [1, shape...]. Other kinds own nothing.
std::vector<std::vector<std::int64_t>> param_shapes(std::string_view kind, std::span<const std::vector<std::int64_t>> input_shapes,
                                                    const OpAttrs& attrs, std::span<const std::int64_t> variable_shape = {});

/// Forward kernel. cross_entropy takes (logits [N, C], labels [N]) and
/// returns the mean loss as a scalar; placeholder returns inputs[0];
/// variable returns params[0].
Tensor forward_op(std::string_view kind, std::span<const Tensor> inputs, std::span<const Tensor> params,
                  const OpAttrs& attrs = {});

struct OpGradients {
  std::vector<Tensor> inputs;  // one per input; empty tensor where no gradient flows
  std::vector<Tensor> params;  // one per parameter
};

/// Reverse-mode kernel given the upstream gradient of the op's output and
/// the inputs cached from the forward pass.
OpGradients backward_op(std::string_view kind, const Tensor& upstream, std::span<const Tensor> inputs,
                        std::span<const Tensor> params, const OpAttrs& attrs = {});

}  // namespace geotrain
