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

#include "geotrain/executor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include "geotrain/error.hpp"

namespace geotrain {

double OptimizerConfig::rate_for(const std::string& op) const {
  auto it = per_op_learning_rate.find(op);
  return it == per_op_learning_rate.end() ? learning_rate : it->second;
}

double IterationResult::mean_loss() const {
  if (losses.empty()) return 0.0;
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<std::int64_t> with_batch(std::int64_t rows, const TensorShape& s) {
  std::vector<std::int64_t> out{rows};
  out.insert(out.end(), s.dims.begin(), s.dims.end());
  return out;
}

std::vector<std::vector<std::int64_t>> node_param_shapes(const OpNode& node,
                                                         const std::map<std::string, TensorShape>& shapes) {
  std::vector<std::vector<std::int64_t>> inputs;
  for (const auto& a : node.args) inputs.push_back(with_batch(1, shapes.at(a)));
  return param_shapes(node.kind, inputs, node.attrs, node.shape);
}

// Argument order handed to kernels; cross_entropy takes (logits, labels).
std::vector<std::string> kernel_args(const OpDag& dag, const OpNode& node) {
  std::vector<std::string> args = node.args;
  if (node.kind == "cross_entropy" && args.size() == 2 && dag.node(args[0]).kind == "label") {
    std::swap(args[0], args[1]);
  }
  return args;
}

}  // namespace

ParamStore init_parameters(const OpDag& dag, std::uint64_t seed) {
  auto shapes = infer_shapes(dag);
  ParamStore store;
  for (const auto& [name, node] : dag.nodes()) {
    auto pshapes = node_param_shapes(node, shapes);
    if (pshapes.empty()) continue;
    std::mt19937_64 rng(seed ^ fnv1a(name));
    auto& params = store[name];
    for (auto& s : pshapes) {
      Tensor t = Tensor::zeros(s);
      for (auto& v : t.data) v = -0.1 + 0.2 * unit_uniform(rng);
      params.push_back(std::move(t));
    }
  }
  return store;
}

Batch synthetic_batch(const OpDag& dag, std::int64_t rows, std::uint64_t seed) {
  auto shapes = infer_shapes(dag);
  Batch batch;
  for (const auto& [name, node] : dag.nodes()) {
    if (node.type != OpType::kPlaceholder) continue;
    std::mt19937_64 rng(seed ^ fnv1a(name) ^ 0x9e3779b97f4a7c15ull);
    if (node.kind == "label") {
      std::int64_t classes = 0;
      for (const auto& user : dag.users(name)) {
        for (const auto& a : dag.node(user).args) {
          if (a != name) classes = shapes.at(a).per_sample_elements();
        }
      }
      if (classes < 1) throw Error(ErrorCode::kInvalidArgument, "label '" + name + "' feeds no logits");
      Tensor t = Tensor::zeros({rows});
      for (auto& v : t.data) v = static_cast<double>(rng() % static_cast<std::uint64_t>(classes));
      batch[name] = std::move(t);
    } else {
      Tensor t = Tensor::zeros(with_batch(rows, shapes.at(name)));
      // Box-Muller over raw engine bits keeps the data identical across
      // standard libraries.
      for (std::size_t i = 0; i < t.numel(); i += 2) {
        double u1 = 1.0 - unit_uniform(rng);
        double u2 = unit_uniform(rng);
        double r = std::sqrt(-2.0 * std::log(u1));
        t.data[i] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < t.numel()) t.data[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
      }
      batch[name] = std::move(t);
    }
  }
  return batch;
}

namespace {

using SlotKey = std::pair<std::string, std::int64_t>;  // (op, micro-batch)

struct Worker;

struct IterationContext {
  const OpDag& dag;
  const Assignment& assignment;
  const std::map<std::string, std::size_t>& topo_index;
  const Batch& batch;
  std::int64_t n_b = 1;
  std::int64_t rows_per_micro_batch = 0;
  std::uint64_t local_iter = 0;
  const std::optional<CompressionPlan>& compression;
  Transport transport = Transport::kInProcess;
  std::map<DeviceId, Worker*> workers;

  std::atomic<std::int64_t> activation_messages{0};
  std::atomic<std::int64_t> gradient_messages{0};
  std::atomic<std::int64_t> dense_bytes{0};
  std::atomic<std::int64_t> wire_bytes{0};
  std::atomic<std::uint64_t> progress{0};

  std::optional<double> ratio_for(DeviceId fp_src, DeviceId fp_dst) const {
    if (!compression) return std::nullopt;
    auto it = compression->link_ratios.find({fp_src, fp_dst});
    if (it == compression->link_ratios.end()) return std::nullopt;
    return it->second;
  }

  void deliver(OpData msg, DeviceId from);
};

struct Worker {
  DeviceId id = 0;
  std::vector<std::string> ops;  // local ops, topological order
  ParamStore params;
  ParamStore grad_acc;

  std::map<SlotKey, Tensor> acti;
  std::map<SlotKey, std::map<std::string, Tensor>> grads_in;
  std::set<SlotKey> fp_done;
  std::set<SlotKey> bp_done;
  std::size_t fp_total = 0;
  std::size_t bp_total = 0;
  std::map<std::int64_t, std::size_t> bp_left;  // per micro-batch
  std::map<SlotKey, double> losses;

  std::mutex inbox_mutex;
  std::condition_variable inbox_cv;
  std::deque<OpData> inbox;

  void reset(const IterationContext& ctx) {
    acti.clear();
    grads_in.clear();
    fp_done.clear();
    bp_done.clear();
    losses.clear();
    bp_left.clear();
    for (auto& [_, ts] : grad_acc) {
      for (auto& t : ts) std::fill(t.data.begin(), t.data.end(), 0.0);
    }
    std::size_t grad_ops = 0;
    for (const auto& op : ops) grad_ops += ctx.dag.node(op).requires_grad;
    fp_total = ops.size() * static_cast<std::size_t>(ctx.n_b);
    bp_total = grad_ops * static_cast<std::size_t>(ctx.n_b);
    for (std::int64_t m = 0; m < ctx.n_b; ++m) bp_left[m] = grad_ops;
  }

  bool done() const { return fp_done.size() == fp_total && bp_done.size() == bp_total; }

  void post(OpData msg) {
    {
      std::lock_guard lock(inbox_mutex);
      inbox.push_back(std::move(msg));
    }
    inbox_cv.notify_one();
  }

  void drain() {
    std::deque<OpData> local;
    {
      std::lock_guard lock(inbox_mutex);
      local.swap(inbox);
    }
    for (auto& msg : local) {
      Tensor t = unpack_tensor(msg);
      SlotKey key{msg.name, msg.micro_batch};
      if (msg.is_gradient()) {
        grads_in[key][msg.actual_op_user] = std::move(t);
      } else {
        acti[key] = std::move(t);
      }
    }
  }

  const Tensor& cached(const SlotKey& key) const {
    auto it = acti.find(key);
    if (it == acti.end()) {
      throw Error(ErrorCode::kMissingActivationCache,
                  "no cached activation of '" + key.first + "' for micro-batch " + std::to_string(key.second));
    }
    return it->second;
  }

  bool step(IterationContext& ctx) {
    drain();
    if (run_forward(ctx)) return true;
    if (fp_done.size() == fp_total && run_backward(ctx)) return true;
    return false;
  }

  bool run_forward(IterationContext& ctx) {
    for (std::int64_t m = 0; m < ctx.n_b; ++m) {
      for (const auto& op : ops) {
        SlotKey key{op, m};
        if (fp_done.contains(key)) continue;
        const OpNode& node = ctx.dag.node(op);
        bool ready = std::all_of(node.args.begin(), node.args.end(),
                                 [&](const std::string& a) { return acti.contains({a, m}); });
        if (!ready) continue;
        forward(ctx, node, m);
        fp_done.insert(key);
        return true;
      }
    }
    return false;
  }

  void forward(IterationContext& ctx, const OpNode& node, std::int64_t m) {
    Tensor out;
    if (node.type == OpType::kPlaceholder) {
      auto it = ctx.batch.find(node.name);
      if (it == ctx.batch.end()) throw Error(ErrorCode::kInvalidArgument, "batch lacks '" + node.name + "'");
      out = slice_rows(it->second, m * ctx.rows_per_micro_batch, (m + 1) * ctx.rows_per_micro_batch);
    } else {
      std::vector<Tensor> inputs;
      for (const auto& a : kernel_args(ctx.dag, node)) inputs.push_back(cached({a, m}));
      static const std::vector<Tensor> kNoParams;
      auto pit = params.find(node.name);
      const auto& p = pit == params.end() ? kNoParams : pit->second;
      out = forward_op(node.kind, inputs, p, node.attrs);
    }
    if (!out.all_finite()) {
      throw Error(ErrorCode::kNonFiniteLoss, "non-finite output from '" + node.name + "'");
    }
    if (node.type == OpType::kLossFunction) losses[{node.name, m}] = out.data.at(0);

    std::map<DeviceId, std::vector<std::string>> remote;
    for (const auto& user : ctx.dag.users(node.name)) {
      DeviceId d = ctx.assignment.at(user);
      if (d != id) remote[d].push_back(user);
    }
    for (auto& [d, users] : remote) {
      OpData msg = make_opdata(node.name, out, ctx.ratio_for(id, d));
      msg.op_users = std::move(users);
      msg.is_loss = node.type == OpType::kLossFunction;
      msg.require_grad = node.requires_grad;
      msg.local_iter = ctx.local_iter;
      msg.micro_batch = static_cast<std::uint32_t>(m);
      ctx.deliver(std::move(msg), id);
    }
    acti[{node.name, m}] = std::move(out);
  }

  bool run_backward(IterationContext& ctx) {
    for (std::int64_t m = 0; m < ctx.n_b; ++m) {
      for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        const OpNode& node = ctx.dag.node(*it);
        SlotKey key{node.name, m};
        if (!node.requires_grad || bp_done.contains(key)) continue;
        std::size_t have = 0;
        if (auto g = grads_in.find(key); g != grads_in.end()) have = g->second.size();
        if (have != ctx.dag.users(node.name).size()) continue;
        backward(ctx, node, m);
        bp_done.insert(key);
        if (--bp_left[m] == 0) release(m);
        return true;
      }
    }
    return false;
  }

  void backward(IterationContext& ctx, const OpNode& node, std::int64_t m) {
    Tensor upstream;
    if (ctx.dag.users(node.name).empty()) {
      upstream = Tensor::scalar(1.0);
    } else {
      // Sum in consumer-name order so the result is independent of arrival order.
      auto& incoming = grads_in.at({node.name, m});
      for (auto& [consumer, g] : incoming) {
        if (upstream.empty()) {
          upstream = g;
          continue;
        }
        if (g.shape != upstream.shape) throw Error(ErrorCode::kShapeMismatch, "gradient shapes differ for '" + node.name + "'");
        for (std::size_t i = 0; i < g.numel(); ++i) upstream.data[i] += g.data[i];
      }
    }

    auto args = kernel_args(ctx.dag, node);
    std::vector<Tensor> inputs;
    for (const auto& a : args) inputs.push_back(cached({a, m}));
    static const std::vector<Tensor> kNoParams;
    auto pit = params.find(node.name);
    const auto& p = pit == params.end() ? kNoParams : pit->second;
    OpGradients grads = backward_op(node.kind, upstream, inputs, p, node.attrs);

    if (!grads.params.empty()) {
      auto& acc = grad_acc.at(node.name);
      for (std::size_t i = 0; i < acc.size(); ++i) {
        for (std::size_t j = 0; j < acc[i].numel(); ++j) acc[i].data[j] += grads.params[i].data[j];
      }
    }
    for (std::size_t i = 0; i < args.size(); ++i) {
      const OpNode& parent = ctx.dag.node(args[i]);
      if (!parent.requires_grad) continue;
      DeviceId owner = ctx.assignment.at(parent.name);
      if (owner == id) {
        grads_in[{parent.name, m}][node.name] = std::move(grads.inputs[i]);
        continue;
      }
      OpData msg = make_opdata(parent.name, grads.inputs[i], ctx.ratio_for(owner, id));
      msg.actual_op_user = node.name;
      msg.require_grad = true;
      msg.local_iter = ctx.local_iter;
      msg.micro_batch = static_cast<std::uint32_t>(m);
      ctx.deliver(std::move(msg), id);
    }
  }

  // Micro-batch m finished its backward pass here; its caches are dead.
  void release(std::int64_t m) {
    std::erase_if(acti, [m](const auto& kv) { return kv.first.second == m; });
    std::erase_if(grads_in, [m](const auto& kv) { return kv.first.second == m; });
  }

  std::string blocked(const IterationContext& ctx) const {
    std::string out;
    for (std::int64_t m = 0; m < ctx.n_b; ++m) {
      for (const auto& op : ops) {
        if (!fp_done.contains({op, m})) out += " FP:" + op + "#" + std::to_string(m);
        if (ctx.dag.node(op).requires_grad && !bp_done.contains({op, m})) out += " BP:" + op + "#" + std::to_string(m);
      }
    }
    return out;
  }
};

void IterationContext::deliver(OpData msg, DeviceId from) {
  RouteTarget target = route_opdata(msg, assignment, from);
  if (target.local) throw Error(ErrorCode::kInvalidArgument, "local traffic must bypass the transport");
  (msg.is_gradient() ? gradient_messages : activation_messages)++;
  dense_bytes += dense_payload_bytes(msg);
  wire_bytes += wire_payload_bytes(msg);
  if (transport == Transport::kFramed) {
    auto users = msg.op_users;
    msg = decode_frame(encode_frame(msg));
    msg.op_users = std::move(users);
  }
  workers.at(target.worker)->post(std::move(msg));
  ++progress;
}

}  // namespace

struct Runtime::Impl {
  const OpDag& dag;
  Assignment assignment;
  ExecutorOptions options;
  std::map<std::string, std::size_t> topo_index;
  std::map<std::string, TensorShape> shapes;
  std::map<DeviceId, std::unique_ptr<Worker>> workers;
  std::uint64_t iterations = 0;

  Impl(const OpDag& d, Assignment a, ExecutorOptions o) : dag(d), assignment(std::move(a)), options(o) {
    check_assignment(dag, assignment);
    shapes = infer_shapes(dag);
    auto order = topological_order(dag);
    for (std::size_t i = 0; i < order.size(); ++i) topo_index[order[i]] = i;
    ParamStore init = init_parameters(dag, options.seed);
    for (const auto& op : order) {
      auto& w = workers[assignment.at(op)];
      if (!w) {
        w = std::make_unique<Worker>();
        w->id = assignment.at(op);
      }
      w->ops.push_back(op);
      if (auto it = init.find(op); it != init.end()) {
        w->params[op] = it->second;
        auto& acc = w->grad_acc[op];
        for (const auto& t : it->second) acc.push_back(Tensor::zeros(t.shape));
      }
    }
  }

  void run_serial(IterationContext& ctx) {
    while (true) {
      bool progress = false;
      bool all_done = true;
      for (auto& [_, w] : workers) {
        while (w->step(ctx)) progress = true;
        all_done = all_done && w->done();
      }
      if (all_done) return;
      if (!progress) throw Error(ErrorCode::kDeadlock, blocked(ctx));
    }
  }

  void run_threaded(IterationContext& ctx) {
    std::atomic<bool> abort{false};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> threads;
    for (auto& [_, w] : workers) {
      Worker* worker = w.get();
      threads.emplace_back([&, worker] {
        try {
          auto last_progress = ctx.progress.load();
          auto idle_since = std::chrono::steady_clock::now();
          while (!worker->done() && !abort) {
            if (worker->step(ctx)) {
              ++ctx.progress;
              continue;
            }
            std::unique_lock lock(worker->inbox_mutex);
            worker->inbox_cv.wait_for(lock, std::chrono::milliseconds(20), [&] { return !worker->inbox.empty(); });
            auto now_progress = ctx.progress.load();
            if (now_progress != last_progress) {
              last_progress = now_progress;
              idle_since = std::chrono::steady_clock::now();
            } else if (std::chrono::steady_clock::now() - idle_since > std::chrono::seconds(5)) {
              throw Error(ErrorCode::kDeadlock, "worker " + std::to_string(worker->id) + " starved:" +
                                                    worker->blocked(ctx));
            }
          }
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          abort = true;
        }
      });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  }

  std::string blocked(const IterationContext& ctx) const {
    std::string out = "blocked tasks:";
    for (const auto& [_, w] : workers) out += w->blocked(ctx);
    return out;
  }
};

Runtime::Runtime(const OpDag& dag, Assignment assignment, ExecutorOptions options)
    : impl_(std::make_unique<Impl>(dag, std::move(assignment), options)) {}

Runtime::~Runtime() = default;

std::uint64_t Runtime::iterations() const noexcept { return impl_->iterations; }

ParamStore Runtime::parameters() const {
  ParamStore out;
  for (const auto& [_, w] : impl_->workers) {
    for (const auto& [op, ts] : w->params) out[op] = ts;
  }
  return out;
}

void Runtime::set_parameters(const ParamStore& params) {
  for (auto& [_, w] : impl_->workers) {
    for (auto& [op, ts] : w->params) {
      auto it = params.find(op);
      if (it == params.end()) continue;
      if (it->second.size() != ts.size()) throw Error(ErrorCode::kShapeMismatch, "parameter count differs for '" + op + "'");
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (it->second[i].shape != ts[i].shape) throw Error(ErrorCode::kShapeMismatch, "parameter shape differs for '" + op + "'");
        ts[i] = it->second[i];
      }
    }
  }
}

IterationResult Runtime::run_iteration(const Batch& batch, std::int64_t n_b,
                                       const std::optional<CompressionPlan>& compression,
                                       const OptimizerConfig& optimizer) {
  auto& im = *impl_;
  if (n_b < 1) throw Error(ErrorCode::kInvalidMicroBatchCount, "n_b must be >= 1");
  std::int64_t rows = -1;
  for (const auto& [name, node] : im.dag.nodes()) {
    if (node.type != OpType::kPlaceholder) continue;
    auto it = batch.find(name);
    if (it == batch.end()) throw Error(ErrorCode::kInvalidArgument, "batch lacks placeholder '" + name + "'");
    auto expected = with_batch(it->second.rows(), im.shapes.at(name));
    if (it->second.shape != expected) throw Error(ErrorCode::kShapeMismatch, "batch tensor '" + name + "' has the wrong shape");
    if (rows >= 0 && rows != it->second.rows()) throw Error(ErrorCode::kShapeMismatch, "placeholders disagree on batch size");
    rows = it->second.rows();
  }
  if (rows >= 0 && (rows % n_b != 0 || rows < n_b)) {
    throw Error(ErrorCode::kInvalidArgument, "batch of " + std::to_string(rows) + " rows does not split into " +
                                                 std::to_string(n_b) + " micro-batches");
  }

  IterationContext ctx{im.dag, im.assignment, im.topo_index, batch, n_b, rows >= 0 ? rows / n_b : 0,
                       im.iterations, compression, im.options.transport, {}};
  for (auto& [id, w] : im.workers) {
    ctx.workers[id] = w.get();
    w->reset(ctx);
  }
  if (im.options.threaded) {
    im.run_threaded(ctx);
  } else {
    im.run_serial(ctx);
  }

  IterationResult result;
  result.losses.assign(static_cast<std::size_t>(n_b), 0.0);
  std::map<SlotKey, double> losses;
  for (const auto& [_, w] : im.workers) losses.insert(w->losses.begin(), w->losses.end());
  for (const auto& [key, value] : losses) result.losses[static_cast<std::size_t>(key.second)] += value;
  for (double l : result.losses) {
    if (!std::isfinite(l)) throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite");
  }

  const double inv = 1.0 / static_cast<double>(n_b);
  for (auto& [_, w] : im.workers) {
    for (auto& [op, ts] : w->params) {
      auto& acc = w->grad_acc.at(op);
      double rate = optimizer.rate_for(op);
      auto& avg = result.gradients[op];
      for (std::size_t i = 0; i < ts.size(); ++i) {
        Tensor g = acc[i];
        for (auto& v : g.data) v *= inv;
        for (std::size_t j = 0; j < g.numel(); ++j) ts[i].data[j] -= rate * g.data[j];
        avg.push_back(std::move(g));
      }
      result.parameters[op] = ts;
    }
    w->acti.clear();
    w->grads_in.clear();
  }
  result.activation_messages = ctx.activation_messages;
  result.gradient_messages = ctx.gradient_messages;
  result.dense_bytes = ctx.dense_bytes;
  result.wire_bytes = ctx.wire_bytes;
  ++im.iterations;
  return result;
}

IterationResult run_iteration(const OpDag& dag, const Assignment& assignment, const Batch& batch, std::int64_t n_b,
                              const std::optional<CompressionPlan>& compression, const OptimizerConfig& optimizer,
                              ExecutorOptions options) {
  Runtime runtime(dag, assignment, options);
  return runtime.run_iteration(batch, n_b, compression, optimizer);
}

}  // namespace geotrain
