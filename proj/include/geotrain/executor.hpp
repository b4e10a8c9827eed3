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

// Miniature distributed runtime: one worker per device executes its
// sub-DAG forward and backward for every micro-batch, exchanging OpData
// with the other workers, then applies SGD to the parameters it owns.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geotrain/compressor.hpp"
#include "geotrain/opdag.hpp"
#include "geotrain/opdata.hpp"
#include "geotrain/tensor_ops.hpp"

namespace geotrain {

struct OptimizerConfig {
  double learning_rate = 0.1;
  std::map<std::string, double> per_op_learning_rate;

  double rate_for(const std::string& op) const;
};

enum class Transport {
  kInProcess,  // OpData handed over by value
  kFramed,     // every message round-trips through the f32 wire frame
};

struct ExecutorOptions {
  std::uint64_t seed = 0;
  Transport transport = Transport::kInProcess;
  bool threaded = false;  // one std::thread per worker
};

using Batch = std::map<std::string, Tensor>;           // placeholder -> full mini-batch
using ParamStore = std::map<std::string, std::vector<Tensor>>;

struct IterationResult {
  std::vector<double> losses;  // per micro-batch, summed over loss nodes
  ParamStore gradients;        // averaged over micro-batches, before the update
  ParamStore parameters;       // after the update
  std::int64_t activation_messages = 0;
  std::int64_t gradient_messages = 0;
  std::int64_t dense_bytes = 0;
  std::int64_t wire_bytes = 0;

  double mean_loss() const;
};

/// Seeded uniform [-0.1, 0.1] initialization keyed by (seed, op name), so
/// the initial weights do not depend on placement.
ParamStore init_parameters(const OpDag& dag, std::uint64_t seed);

/// Gaussian inputs and uniform integer labels for every placeholder.
Batch synthetic_batch(const OpDag& dag, std::int64_t rows, std::uint64_t seed);

class Runtime {
 public:
  Runtime(const OpDag& dag, Assignment assignment, ExecutorOptions options = {});
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  IterationResult run_iteration(const Batch& batch, std::int64_t n_b,
                                const std::optional<CompressionPlan>& compression, const OptimizerConfig& optimizer);

  ParamStore parameters() const;
  void set_parameters(const ParamStore& params);
  std::uint64_t iterations() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One iteration from freshly initialized parameters.
IterationResult run_iteration(const OpDag& dag, const Assignment& assignment, const Batch& batch, std::int64_t n_b,
                              const std::optional<CompressionPlan>& compression, const OptimizerConfig& optimizer,
                              ExecutorOptions options = {});

}  // namespace geotrain
