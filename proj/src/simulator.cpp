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

#include "geotrain/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <tuple>

#include "geotrain/error.hpp"

namespace geotrain {

std::string_view to_string(Phase phase) noexcept { return phase == Phase::kForward ? "FP" : "BP"; }

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::kOpStart: return "OpStart";
    case EventKind::kOpFinish: return "OpFinish";
    case EventKind::kMsgSend: return "MsgSend";
    case EventKind::kMsgArrive: return "MsgArrive";
  }
  return "Unknown";
}

double SimTrace::busy(DeviceId d) const {
  double b = 0.0;
  if (auto it = fp_busy.find(d); it != fp_busy.end()) b += it->second;
  if (auto it = bp_busy.find(d); it != bp_busy.end()) b += it->second;
  return b;
}

namespace {

using TaskKey = std::tuple<Phase, std::int64_t, std::string>;  // phase, micro-batch, op

struct Message {
  Phase phase;
  std::int64_t micro_batch;
  std::string ref;
  std::string producer;  // FP: producing op; BP: op receiving the gradient
  std::string consumer;  // BP only: op that computed the gradient
  DeviceId src;
  DeviceId dst;
  double bytes;
};

struct Pending {
  double time;
  std::uint64_t seq;
  bool is_message;
  TaskKey task;  // compute completion
  std::size_t message = 0;

  bool operator>(const Pending& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
};

class Simulation {
 public:
  Simulation(const OpDag& dag, const Assignment& assignment, const CostTable& costs, const NetworkGraph& network,
             std::int64_t n_b, const std::optional<CompressionPlan>& compression)
      : dag_(dag), assignment_(assignment), costs_(costs), network_(network), n_b_(n_b), compression_(compression) {}

  SimTrace run() {
    check_assignment(dag_, assignment_);
    if (n_b_ < 1) throw Error(ErrorCode::kInvalidMicroBatchCount, "n_b must be >= 1");
    for (const auto& [name, d] : assignment_) {
      if (!network_.has_device(d)) throw Error(ErrorCode::kInvalidArgument, "node '" + name + "' on unknown device");
    }
    trace_.n_b = n_b_;
    trace_.compressed = compression_.has_value();
    for (DeviceId d : network_.device_ids()) {
      trace_.fp_busy[d] = 0.0;
      trace_.bp_busy[d] = 0.0;
    }

    for (const auto& [name, node] : dag_.nodes()) {
      for (std::int64_t m = 0; m < n_b_; ++m) {
        need_[{Phase::kForward, m, name}] = static_cast<int>(dag_.parents(name).size());
        ++fp_remaining_;
        if (node.requires_grad) {
          need_[{Phase::kBackward, m, name}] = static_cast<int>(dag_.users(name).size());
          ++bp_remaining_;
        }
      }
    }
    std::vector<TaskKey> sources;
    for (const auto& [key, n] : need_) {
      if (std::get<0>(key) == Phase::kForward && n == 0) sources.push_back(key);
    }
    for (const auto& key : sources) make_ready(key);
    dispatch(0.0);
    while (!pending_.empty()) {
      double t = pending_.top().time;
      while (!pending_.empty() && pending_.top().time == t) {
        Pending p = pending_.top();
        pending_.pop();
        if (p.is_message) {
          arrive(p.message, t);
        } else {
          finish(p.task, t);
        }
      }
      dispatch(t);
    }
    if (fp_remaining_ > 0 || bp_remaining_ > 0) {
      std::string blocked;
      for (const auto& [key, n] : need_) {
        if (n > 0) blocked += std::string(blocked.empty() ? "" : ", ") + std::string(to_string(std::get<0>(key))) +
                              ":" + std::get<2>(key) + "#" + std::to_string(std::get<1>(key));
      }
      throw Error(ErrorCode::kDeadlock, "blocked tasks: " + blocked);
    }
    for (const auto& e : trace_.events) {
      trace_.makespan = std::max(trace_.makespan, e.time);
      if (e.phase == Phase::kForward) trace_.fp_makespan = std::max(trace_.fp_makespan, e.time);
    }
    return std::move(trace_);
  }

 private:
  DeviceId where(const std::string& op) const { return assignment_.at(op); }

  double duration(const TaskKey& task) const {
    const auto& [phase, m, op] = task;
    const OpCost& c = costs_.at(op);
    double flops = phase == Phase::kForward ? c.flops : c.bp_flops();
    return compute_time(flops, network_.device(where(op)));
  }

  double wire_size(double dense_bytes, DeviceId fp_src, DeviceId fp_dst) const {
    if (!compression_) return dense_bytes;
    auto it = compression_->link_ratios.find({fp_src, fp_dst});
    if (it == compression_->link_ratios.end()) return dense_bytes;
    return compressed_message_bytes(dense_bytes, it->second);
  }

  void make_ready(TaskKey task) {
    need_.erase(task);
    device_ready_[where(std::get<2>(task))].insert(task);
  }

  void satisfy(const TaskKey& task) {
    auto it = need_.find(task);
    if (it == need_.end()) return;
    if (--it->second == 0 && (std::get<0>(task) == Phase::kForward || fp_remaining_ == 0)) make_ready(task);
  }

  void record(SimEvent e) { trace_.events.push_back(std::move(e)); }

  void send(Message msg, double t) {
    std::size_t id = messages_.size();
    messages_.push_back(std::move(msg));
    const auto& m = messages_.back();
    (void)t;
    link_queue_[{m.src, m.dst}].push_back(id);
  }

  void finish(const TaskKey& task, double t) {
    const auto& [phase, m, op] = task;
    DeviceId here = where(op);
    busy_devices_.erase(here);
    record({t, EventKind::kOpFinish, phase, op, m, here, here, 0.0});

    if (phase == Phase::kForward) {
      std::set<DeviceId> remote;
      for (const auto& user : dag_.users(op)) {
        DeviceId d = where(user);
        if (d == here) {
          satisfy({Phase::kForward, m, user});
        } else {
          remote.insert(d);
        }
      }
      for (DeviceId d : remote) {
        double bytes = wire_size(costs_.at(op).out_bytes, here, d);
        send({Phase::kForward, m, op + "->" + std::to_string(d), op, "", here, d, bytes}, t);
      }
      if (--fp_remaining_ == 0) {
        // Fill-drain barrier: release every BP task whose gradients are in.
        std::vector<TaskKey> ready;
        for (const auto& [key, n] : need_) {
          if (std::get<0>(key) == Phase::kBackward && n == 0) ready.push_back(key);
        }
        for (const auto& key : ready) make_ready(key);
      }
    } else {
      --bp_remaining_;
      for (const auto& parent : dag_.parents(op)) {
        if (!dag_.node(parent).requires_grad) continue;
        DeviceId d = where(parent);
        if (d == here) {
          satisfy({Phase::kBackward, m, parent});
        } else {
          double bytes = wire_size(costs_.at(parent).out_bytes, d, here);
          send({Phase::kBackward, m, grad_label({parent, op}), parent, op, here, d, bytes}, t);
        }
      }
    }
  }

  void arrive(std::size_t id, double t) {
    const Message& msg = messages_[id];
    busy_links_.erase({msg.src, msg.dst});
    trace_.link_bytes[{msg.src, msg.dst}] += msg.bytes;
    record({t, EventKind::kMsgArrive, msg.phase, msg.ref, msg.micro_batch, msg.src, msg.dst, msg.bytes});
    if (msg.phase == Phase::kForward) {
      for (const auto& user : dag_.users(msg.producer)) {
        if (where(user) == msg.dst) satisfy({Phase::kForward, msg.micro_batch, user});
      }
    } else {
      satisfy({Phase::kBackward, msg.micro_batch, msg.producer});
    }
  }

  void dispatch(double t) {
    for (auto& [device, ready] : device_ready_) {
      if (ready.empty() || busy_devices_.contains(device)) continue;
      TaskKey task = *ready.begin();
      ready.erase(ready.begin());
      busy_devices_.insert(device);
      double dur = duration(task);
      const auto& [phase, m, op] = task;
      (phase == Phase::kForward ? trace_.fp_busy : trace_.bp_busy)[device] += dur;
      record({t, EventKind::kOpStart, phase, op, m, device, device, 0.0});
      pending_.push({t + dur, seq_++, false, task, 0});
    }
    for (auto& [link, queue] : link_queue_) {
      if (queue.empty() || busy_links_.contains(link)) continue;
      std::size_t id = queue.front();
      queue.erase(queue.begin());
      busy_links_.insert(link);
      const Message& m = messages_[id];
      record({t, EventKind::kMsgSend, m.phase, m.ref, m.micro_batch, m.src, m.dst, m.bytes});
      double dur = comm_time(network_, link.first, link.second, m.bytes);
      pending_.push({t + dur, seq_++, true, {}, id});
    }
  }

  const OpDag& dag_;
  const Assignment& assignment_;
  const CostTable& costs_;
  const NetworkGraph& network_;
  std::int64_t n_b_;
  const std::optional<CompressionPlan>& compression_;

  std::map<TaskKey, int> need_;
  std::map<DeviceId, std::set<TaskKey>> device_ready_;
  std::map<LinkKey, std::vector<std::size_t>> link_queue_;
  std::set<DeviceId> busy_devices_;
  std::set<LinkKey> busy_links_;
  std::vector<Message> messages_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
  std::uint64_t seq_ = 0;
  std::int64_t fp_remaining_ = 0;
  std::int64_t bp_remaining_ = 0;
  SimTrace trace_;
};

}  // namespace

SimTrace simulate(const OpDag& dag, const Assignment& assignment, const CostTable& costs, const NetworkGraph& network,
                  std::int64_t n_b, const std::optional<CompressionPlan>& compression) {
  return Simulation(dag, assignment, costs, network, n_b, compression).run();
}

double analytic_gap(const SimTrace& trace, const ThroughputReport& report) {
  double analytic = trace.compressed ? report.compressed_pipeline_time : report.pipeline_time;
  if (trace.fp_makespan == 0.0) return analytic == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(trace.fp_makespan - analytic) / trace.fp_makespan;
}

}  // namespace geotrain
