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

#include "geotrain/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "geotrain/error.hpp"

namespace geotrain {

std::int64_t shape_numel(std::span<const std::int64_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::int64_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw Error(ErrorCode::kShapeMismatch, "tensor data length does not match its shape");
  }
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::int64_t begin, std::int64_t end) {
  if (t.shape.empty() || begin < 0 || end > t.shape[0] || begin > end) {
    throw Error(ErrorCode::kShapeMismatch, "row slice out of range");
  }
  auto row = static_cast<std::size_t>(shape_numel(std::span(t.shape).subspan(1)));
  Tensor out;
  out.shape = t.shape;
  out.shape[0] = end - begin;
  out.data.assign(t.data.begin() + static_cast<std::ptrdiff_t>(begin * row),
                  t.data.begin() + static_cast<std::ptrdiff_t>(end * row));
  return out;
}

namespace {

[[noreturn]] void mismatch(std::string_view kind, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, std::string(kind) + ": " + what);
}

void expect(bool ok, std::string_view kind, const std::string& what) {
  if (!ok) mismatch(kind, what);
}

std::int64_t attr(const OpAttrs& attrs, const std::string& key, std::int64_t fallback) {
  auto it = attrs.find(key);
  return it == attrs.end() ? fallback : it->second;
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, stride, pad, hout, wout;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& weight, const OpAttrs& attrs) {
  expect(x.shape.size() == 4, "conv2d", "input must be [N, C, H, W]");
  expect(weight.shape.size() == 4 && weight.shape[2] == weight.shape[3], "conv2d", "weight must be [Cout, Cin, k, k]");
  ConvGeometry g{x.shape[0], x.shape[1], x.shape[2], x.shape[3], weight.shape[0], weight.shape[2],
                 attr(attrs, "stride", 1), attr(attrs, "padding", 0), 0, 0};
  expect(weight.shape[1] == g.cin, "conv2d", "channel mismatch");
  g.hout = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wout = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  expect(g.hout > 0 && g.wout > 0, "conv2d", "kernel larger than padded input");
  return g;
}

// Broadcast rule for add: equal shapes, or a leading dimension of 1.
std::vector<std::int64_t> add_shape(std::span<const Tensor> inputs) {
  std::vector<std::int64_t> out = inputs[0].shape;
  for (const auto& t : inputs) {
    expect(t.shape.size() == out.size() && !out.empty(), "add", "operand ranks differ");
    expect(std::equal(t.shape.begin() + 1, t.shape.end(), out.begin() + 1), "add", "operand shapes differ");
    if (t.shape[0] != out[0]) {
      expect(t.shape[0] == 1 || out[0] == 1, "add", "leading dimensions not broadcastable");
      out[0] = std::max(out[0], t.shape[0]);
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::int64_t>> param_shapes(std::string_view kind,
                                                    std::span<const std::vector<std::int64_t>> input_shapes,
                                                    const OpAttrs& attrs, std::span<const std::int64_t> variable_shape) {
  if (kind == "linear") {
    expect(input_shapes.size() == 1, kind, "expects one input");
    std::int64_t in = shape_numel(std::span(input_shapes[0]).subspan(1));
    std::int64_t out = attr(attrs, "out", 0);
    expect(out > 0, kind, "missing 'out'");
    return {{out, in}, {out}};
  }
  if (kind == "conv2d") {
    expect(input_shapes.size() == 1 && input_shapes[0].size() == 4, kind, "input must be [N, C, H, W]");
    std::int64_t cout = attr(attrs, "out_channels", 0);
    std::int64_t k = attr(attrs, "kernel_size", 0);
    expect(cout > 0 && k > 0, kind, "missing out_channels / kernel_size");
    return {{cout, input_shapes[0][1], k, k}, {cout}};
  }
  if (kind == "tensor") {
    std::vector<std::int64_t> s{1};
    s.insert(s.end(), variable_shape.begin(), variable_shape.end());
    return {s};
  }
  return {};
}

Tensor forward_op(std::string_view kind, std::span<const Tensor> inputs, std::span<const Tensor> params,
                  const OpAttrs& attrs) {
  if (kind == "input" || kind == "label") {
    expect(inputs.size() == 1, kind, "placeholder expects its data tensor");
    return inputs[0];
  }
  if (kind == "tensor") {
    expect(params.size() == 1, kind, "variable expects its value");
    return params[0];
  }
  if (kind == "relu") {
    expect(inputs.size() == 1, kind, "expects one input");
    Tensor out = inputs[0];
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
  }
  if (kind == "add") {
    expect(inputs.size() >= 2, kind, "expects at least two inputs");
    Tensor out = Tensor::zeros(add_shape(inputs));
    const std::size_t row = out.numel() / static_cast<std::size_t>(out.shape[0]);
    for (const auto& t : inputs) {
      bool broadcast = t.shape[0] != out.shape[0];
      for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += t.data[broadcast ? i % row : i];
    }
    return out;
  }
  if (kind == "linear") {
    expect(inputs.size() == 1 && params.size() == 2, kind, "expects one input and (W, b)");
    const Tensor& x = inputs[0];
    const Tensor& w = params[0];
    const Tensor& b = params[1];
    const std::int64_t rows = x.rows();
    const std::int64_t in = w.shape[1];
    const std::int64_t out = w.shape[0];
    expect(static_cast<std::int64_t>(x.numel()) == rows * in, kind, "input features do not match weight");
    Tensor y = Tensor::zeros({rows, out});
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t o = 0; o < out; ++o) {
        double acc = b.data[o];
        for (std::int64_t i = 0; i < in; ++i) acc += w.data[o * in + i] * x.data[r * in + i];
        y.data[r * out + o] = acc;
      }
    }
    return y;
  }
  if (kind == "conv2d") {
    expect(inputs.size() == 1 && params.size() == 2, kind, "expects one input and (W, b)");
    const Tensor& x = inputs[0];
    const Tensor& w = params[0];
    const Tensor& b = params[1];
    auto g = conv_geometry(x, w, attrs);
    Tensor y = Tensor::zeros({g.n, g.cout, g.hout, g.wout});
    for (std::int64_t n = 0; n < g.n; ++n)
      for (std::int64_t co = 0; co < g.cout; ++co)
        for (std::int64_t oh = 0; oh < g.hout; ++oh)
          for (std::int64_t ow = 0; ow < g.wout; ++ow) {
            double acc = b.data[co];
            for (std::int64_t ci = 0; ci < g.cin; ++ci)
              for (std::int64_t kh = 0; kh < g.k; ++kh)
                for (std::int64_t kw = 0; kw < g.k; ++kw) {
                  std::int64_t ih = oh * g.stride - g.pad + kh;
                  std::int64_t iw = ow * g.stride - g.pad + kw;
                  if (ih < 0 || ih >= g.h || iw < 0 || iw >= g.w) continue;
                  acc += w.data[((co * g.cin + ci) * g.k + kh) * g.k + kw] *
                         x.data[((n * g.cin + ci) * g.h + ih) * g.w + iw];
                }
            y.data[((n * g.cout + co) * g.hout + oh) * g.wout + ow] = acc;
          }
    return y;
  }
  if (kind == "cross_entropy") {
    expect(inputs.size() == 2, kind, "expects (logits, labels)");
    const Tensor& z = inputs[0];
    const Tensor& labels = inputs[1];
    expect(z.shape.size() == 2, kind, "logits must be [N, C]");
    const std::int64_t n = z.shape[0];
    const std::int64_t c = z.shape[1];
    expect(static_cast<std::int64_t>(labels.numel()) == n, kind, "one label per logits row required");
    double total = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
      auto label = static_cast<std::int64_t>(labels.data[r]);
      expect(label >= 0 && label < c && static_cast<double>(label) == labels.data[r], kind, "label out of range");
      const double* row = z.data.data() + r * c;
      double mx = *std::max_element(row, row + c);
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
      total += mx + std::log(sum) - row[label];
    }
    return Tensor::scalar(total / static_cast<double>(n));
  }
  throw Error(ErrorCode::kInvalidArgument, "unsupported operator kind '" + std::string(kind) + "'");
}

OpGradients backward_op(std::string_view kind, const Tensor& upstream, std::span<const Tensor> inputs,
                        std::span<const Tensor> params, const OpAttrs& attrs) {
  OpGradients g;
  if (kind == "input" || kind == "label") {
    g.inputs.emplace_back();
    return g;
  }
  if (kind == "tensor") {
    expect(params.size() == 1 && upstream.shape == params[0].shape, kind, "gradient shape mismatch");
    g.params.push_back(upstream);
    return g;
  }
  if (kind == "relu") {
    expect(inputs.size() == 1 && upstream.shape == inputs[0].shape, kind, "gradient shape mismatch");
    Tensor dx = upstream;
    for (std::size_t i = 0; i < dx.numel(); ++i) {
      if (!(inputs[0].data[i] > 0.0)) dx.data[i] = 0.0;
    }
    g.inputs.push_back(std::move(dx));
    return g;
  }
  if (kind == "add") {
    auto out_shape = add_shape(inputs);
    expect(upstream.shape == out_shape, kind, "gradient shape mismatch");
    const std::size_t row = upstream.numel() / static_cast<std::size_t>(out_shape[0]);
    for (const auto& t : inputs) {
      if (t.shape == out_shape) {
        g.inputs.push_back(upstream);
        continue;
      }
      Tensor dx = Tensor::zeros(t.shape);
      for (std::size_t i = 0; i < upstream.numel(); ++i) dx.data[i % row] += upstream.data[i];
      g.inputs.push_back(std::move(dx));
    }
    return g;
  }
  if (kind == "linear") {
    expect(inputs.size() == 1 && params.size() == 2, kind, "expects one input and (W, b)");
    const Tensor& x = inputs[0];
    const Tensor& w = params[0];
    const std::int64_t rows = x.rows();
    const std::int64_t in = w.shape[1];
    const std::int64_t out = w.shape[0];
    expect(upstream.shape == std::vector<std::int64_t>{rows, out}, kind, "gradient shape mismatch");
    Tensor dx = Tensor::zeros(x.shape);
    Tensor dw = Tensor::zeros(w.shape);
    Tensor db = Tensor::zeros(params[1].shape);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t o = 0; o < out; ++o) {
        double u = upstream.data[r * out + o];
        db.data[o] += u;
        for (std::int64_t i = 0; i < in; ++i) {
          dx.data[r * in + i] += u * w.data[o * in + i];
          dw.data[o * in + i] += u * x.data[r * in + i];
        }
      }
    }
    g.inputs.push_back(std::move(dx));
    g.params.push_back(std::move(dw));
    g.params.push_back(std::move(db));
    return g;
  }
  if (kind == "conv2d") {
    expect(inputs.size() == 1 && params.size() == 2, kind, "expects one input and (W, b)");
    const Tensor& x = inputs[0];
    const Tensor& w = params[0];
    auto geo = conv_geometry(x, w, attrs);
    expect(upstream.shape == std::vector<std::int64_t>{geo.n, geo.cout, geo.hout, geo.wout}, kind,
           "gradient shape mismatch");
    Tensor dx = Tensor::zeros(x.shape);
    Tensor dw = Tensor::zeros(w.shape);
    Tensor db = Tensor::zeros(params[1].shape);
    for (std::int64_t n = 0; n < geo.n; ++n)
      for (std::int64_t co = 0; co < geo.cout; ++co)
        for (std::int64_t oh = 0; oh < geo.hout; ++oh)
          for (std::int64_t ow = 0; ow < geo.wout; ++ow) {
            double u = upstream.data[((n * geo.cout + co) * geo.hout + oh) * geo.wout + ow];
            db.data[co] += u;
            for (std::int64_t ci = 0; ci < geo.cin; ++ci)
              for (std::int64_t kh = 0; kh < geo.k; ++kh)
                for (std::int64_t kw = 0; kw < geo.k; ++kw) {
                  std::int64_t ih = oh * geo.stride - geo.pad + kh;
                  std::int64_t iw = ow * geo.stride - geo.pad + kw;
                  if (ih < 0 || ih >= geo.h || iw < 0 || iw >= geo.w) continue;
                  std::size_t wi = static_cast<std::size_t>(((co * geo.cin + ci) * geo.k + kh) * geo.k + kw);
                  std::size_t xi = static_cast<std::size_t>(((n * geo.cin + ci) * geo.h + ih) * geo.w + iw);
                  dw.data[wi] += u * x.data[xi];
                  dx.data[xi] += u * w.data[wi];
                }
          }
    g.inputs.push_back(std::move(dx));
    g.params.push_back(std::move(dw));
    g.params.push_back(std::move(db));
    return g;
  }
  if (kind == "cross_entropy") {
    expect(inputs.size() == 2 && upstream.numel() == 1, kind, "expects (logits, labels) and a scalar gradient");
    const Tensor& z = inputs[0];
    const Tensor& labels = inputs[1];
    const std::int64_t n = z.shape[0];
    const std::int64_t c = z.shape[1];
    const double scale = upstream.data[0] / static_cast<double>(n);
    Tensor dz = Tensor::zeros(z.shape);
    for (std::int64_t r = 0; r < n; ++r) {
      const double* row = z.data.data() + r * c;
      double mx = *std::max_element(row, row + c);
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
      for (std::int64_t j = 0; j < c; ++j) dz.data[r * c + j] = scale * std::exp(row[j] - mx) / sum;
      dz.data[r * c + static_cast<std::int64_t>(labels.data[r])] -= scale;
    }
    g.inputs.push_back(std::move(dz));
    g.inputs.emplace_back();
    return g;
  }
  throw Error(ErrorCode::kInvalidArgument, "unsupported operator kind '" + std::string(kind) + "'");
}

}  // namespace geotrain
