// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/dataflow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>
#include <queue>
#include <locale>
#include <sstream>

#include "fxformer/error.hpp"
#include "json.hpp"

namespace fxformer {

namespace {

int ceil_log2(int n) {
  if (n <= 1) return 0;
  return std::bit_width(static_cast<unsigned>(n - 1));
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

int ReuseConfig::reuse_for(std::size_t layer) const {
  auto it = layer_reuse.find(layer);
  return it == layer_reuse.end() ? reuse : it->second;
}

void ReuseConfig::validate() const {
  auto check = [](int r) {
    if (r < 1 || !std::has_single_bit(static_cast<unsigned>(r)))
      throw std::invalid_argument("reuse factor must be a power of two >= 1, got " +
                                  std::to_string(r));
  };
  check(reuse);
  for (const auto& [layer, r] : layer_reuse) check(r);
  if (!std::isfinite(clock_period_ns) || clock_period_ns <= 0.0)
    throw std::invalid_argument("clock period must be finite and positive");
}

int stage_depth(const StageInfo& s, int reuse, const StageCosts& costs) {
  int d = 0;
  for (const auto& op : s.ops) {
    switch (op.kind) {
      case OpKind::multiply: d += ceil_log2(op.fan_in) + costs.multiply_base; break;
      case OpKind::lookup: d += costs.lookup; break;
      case OpKind::elementwise: d += ceil_log2(op.fan_in) + costs.elementwise; break;
    }
  }
  if (s.multiplies > 0) d += reuse - 1;
  return std::max(d, 1);
}

const FifoChannel& PipelineSchedule::channel(std::string_view name) const {
  for (const auto& c : channels)
    if (c.name == name) return c;
  throw std::out_of_range("no channel named '" + std::string(name) + "'");
}

PipelineSchedule build_schedule(const QModel& qm, const ReuseConfig& rc,
                                const ScheduleOptions& opts) {
  rc.validate();
  PipelineSchedule s;
  s.model = &qm;
  s.reuse = rc;
  s.options = opts;
  s.input_rows = static_cast<std::size_t>(qm.seq_len);
  const std::size_t default_depth =
      opts.fifo_depth > 0 ? opts.fifo_depth : 2 * static_cast<std::size_t>(qm.seq_len);

  auto name_of = [&](int stage) { return stage < 0 ? std::string("input") : s.stages[static_cast<std::size_t>(stage)].info.name; };

  auto connect = [&](int producer, int consumer, int port, std::size_t width, const std::string& suffix) {
    FifoChannel c;
    c.producer = producer;
    c.consumer = consumer;
    c.port = port;
    c.width = width;
    c.name = name_of(producer) + "->" + (consumer < 0 ? std::string("output") : name_of(consumer)) + suffix;
    const int r = producer < 0 ? 1 : s.stages[static_cast<std::size_t>(producer)].reuse;
    c.lanes = std::max<std::size_t>(1, ceil_div(width, static_cast<std::size_t>(r)));
    if (consumer < 0) {
      c.depth = std::numeric_limits<std::size_t>::max();
    } else {
      auto it = opts.channel_depth.find(c.name);
      c.depth = it != opts.channel_depth.end() ? it->second : default_depth;
      if (c.depth < 1) throw std::invalid_argument("FIFO depth must be >= 1 for " + c.name);
    }
    const std::size_t idx = s.channels.size();
    s.channels.push_back(std::move(c));
    if (producer < 0) s.source_outputs.push_back(idx);
    else s.outputs[static_cast<std::size_t>(producer)].push_back(idx);
    if (consumer >= 0) {
      auto& ports = s.inputs[static_cast<std::size_t>(consumer)];
      if (ports.size() <= static_cast<std::size_t>(port)) ports.resize(static_cast<std::size_t>(port) + 1);
      ports[static_cast<std::size_t>(port)] = idx;
    }
    return idx;
  };

  std::vector<int> layer_out(qm.layers.size(), -1);
  std::vector<std::size_t> layer_width(qm.layers.size(), 0);
  Shape in = qm.input_shape();
  int prev = -1;
  std::size_t prev_width = in.cols;
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    const auto infos = describe_layer(qm.layers[i], qm.config, in, i);
    const int first = static_cast<int>(s.stages.size());
    const int r = rc.reuse_for(i);
    for (const auto& info : infos) {
      StageModel m;
      m.info = info;
      m.reuse = r;
      m.ii_cycles = info.multiplies > 0 ? r : 1;
      m.pipeline_depth_cycles = stage_depth(info, r, opts.costs);
      m.rows = info.tokens_in;
      m.barrier = info.barrier < 0 ? -1 : first + info.barrier;
      s.stages.push_back(std::move(m));
      s.inputs.emplace_back();
      s.outputs.emplace_back();
    }
    for (std::size_t k = 0; k < infos.size(); ++k) {
      const int st = first + static_cast<int>(k);
      if (k == 0) {
        connect(prev, st, 0, prev_width, "");
        if (const auto* res = std::get_if<QResidual>(&qm.layers[i])) {
          const int src = res->source < 0 ? -1 : layer_out[static_cast<std::size_t>(res->source)];
          const std::size_t w = res->source < 0 ? qm.input_shape().cols
                                                : layer_width[static_cast<std::size_t>(res->source)];
          connect(src, st, 1, w, "[skip]");
        }
      } else {
        connect(st - 1, st, 0, infos[k - 1].out_width, "");
      }
    }
    prev = first + static_cast<int>(infos.size()) - 1;
    prev_width = infos.back().out_width;
    layer_out[i] = prev;
    layer_width[i] = prev_width;
    in = qm.shapes[i];
  }
  s.sink_channel = connect(prev, -1, 0, prev_width, "");
  s.output_rows = qm.shapes.back().rows;
  return s;
}

namespace {

struct Event {
  std::uint64_t time;
  std::uint64_t seq;
  std::size_t channel;
  std::shared_ptr<const Token> token;
  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct ChannelState {
  std::deque<std::shared_ptr<const Token>> queue;
  std::size_t reserved = 0;
  std::size_t peak = 0;
  std::size_t tokens = 0;
};

struct StageState {
  std::uint64_t next_fire = 0;
  std::size_t fired = 0;
  std::size_t produced = 0;
  std::uint64_t last_completion = 0;
  std::int64_t first_fire = -1;
  std::int64_t last_fire = -1;
  std::uint64_t stalls = 0;
};

class Simulator {
 public:
  Simulator(const PipelineSchedule& s, const QTensor* x, const SimOptions& o)
      : s_(s), x_(x), o_(o), ch_(s.channels.size()), st_(s.stages.size()) {
    if (o.functional) {
      if (!s.model) throw InvariantError("schedule has no model");
      Shape in = s.model->input_shape();
      for (std::size_t i = 0; i < s.model->layers.size(); ++i) {
        auto l = make_layer_logic(s.model->layers[i], s.model->config, in, o.ops);
        for (auto& p : l) logic_.push_back(std::move(p));
        in = s.model->shapes[i];
      }
      if (logic_.size() != s.stages.size()) throw InvariantError("stage logic count mismatch");
    }
    std::size_t max_depth = 1;
    std::size_t total_rows = s.input_rows;
    for (const auto& m : s.stages) {
      max_depth = std::max<std::size_t>(max_depth, static_cast<std::size_t>(m.pipeline_depth_cycles) *
                                                       static_cast<std::size_t>(m.ii_cycles));
      total_rows += m.rows;
    }
    watchdog_ = max_depth * total_rows;
  }

  CycleReport run(std::vector<rowops::Row>* outputs) {
    if (o_.trace) {
      *o_.trace << "cycle";
      for (const auto& c : s_.channels) *o_.trace << ',' << c.name;
      *o_.trace << '\n';
    }
    std::uint64_t t = 0;
    std::uint64_t idle = 0;
    std::uint64_t last_arrival = 0;
    std::size_t emitted = 0;
    std::size_t received = 0;
    while (received < s_.output_rows) {
      bool moved = false;
      while (!events_.empty() && events_.top().time <= t) {
        const Event& e = events_.top();
        auto& c = ch_[e.channel];
        --c.reserved;
        c.queue.push_back(e.token);
        ++c.tokens;
        events_.pop();
        moved = true;
      }
      note_peaks();

      // Input source: one row per cycle while every fan-out channel has room.
      if (emitted < s_.input_rows && has_room(s_.source_outputs)) {
        auto tok = std::make_shared<Token>();
        if (x_) tok->data.assign(x_->row(emitted).begin(), x_->row(emitted).end());
        for (auto idx : s_.source_outputs) {
          ch_[idx].queue.push_back(tok);
          ++ch_[idx].tokens;
        }
        ++emitted;
        moved = true;
      }

      for (std::size_t i = 0; i < s_.stages.size(); ++i) moved |= try_fire(i, t);

      auto& sink = ch_[s_.sink_channel];
      note_peaks();
      while (!sink.queue.empty()) {
        if (outputs) outputs->push_back(sink.queue.front()->data);
        sink.queue.pop_front();
        ++received;
        last_arrival = t;
      }

      if (o_.trace) {
        *o_.trace << t;
        for (const auto& c : ch_) *o_.trace << ',' << c.queue.size();
        *o_.trace << '\n';
      }

      if (received >= s_.output_rows) break;
      idle = (moved || !events_.empty()) ? 0 : idle + 1;
      if (idle >= watchdog_) throw DeadlockError(diagnose(t));
      ++t;
    }
    return report(last_arrival);
  }

 private:
  // Occupancy counts queued tokens plus slots reserved by in-flight results.
  void note_peaks() {
    for (auto& c : ch_) c.peak = std::max(c.peak, c.queue.size() + c.reserved);
  }

  bool has_room(const std::vector<std::size_t>& chans) const {
    for (auto idx : chans) {
      const auto& c = ch_[idx];
      if (c.queue.size() + c.reserved >= s_.channels[idx].depth) return false;
    }
    return true;
  }

  bool try_fire(std::size_t i, std::uint64_t t) {
    const auto& m = s_.stages[i];
    auto& st = st_[i];
    const auto& ins = s_.inputs[i];
    for (auto idx : ins)
      if (ch_[idx].queue.empty()) return false;
    if (t < st.next_fire) return false;
    if (m.barrier >= 0) {
      const auto& b = st_[static_cast<std::size_t>(m.barrier)];
      if (b.fired < s_.stages[static_cast<std::size_t>(m.barrier)].rows || b.last_completion > t)
        return false;
    }
    const bool emits = m.info.tokens_out == m.info.tokens_in || st.fired + 1 == m.rows;
    if (emits && !has_room(s_.outputs[i])) {
      ++st.stalls;
      return false;
    }

    std::vector<Token> in;
    for (auto idx : ins) {
      if (logic_.empty()) in.emplace_back();
      else in.push_back(*ch_[idx].queue.front());
      ch_[idx].queue.pop_front();
    }
    std::shared_ptr<const Token> out;
    if (!logic_.empty()) {
      auto r = logic_[i]->fire(in);
      if (r.has_value() != emits) throw InvariantError("stage " + m.info.name + " emitted out of turn");
      if (r) out = std::make_shared<const Token>(std::move(*r));
    } else if (emits) {
      out = std::make_shared<const Token>();
    }

    const auto depth = static_cast<std::uint64_t>(m.pipeline_depth_cycles);
    st.next_fire = t + static_cast<std::uint64_t>(m.ii_cycles);
    ++st.fired;
    if (st.first_fire < 0) st.first_fire = static_cast<std::int64_t>(t);
    st.last_fire = static_cast<std::int64_t>(t);
    st.last_completion = t + depth;
    if (out) {
      ++st.produced;
      for (auto idx : s_.outputs[i]) {
        ++ch_[idx].reserved;
        events_.push(Event{t + depth, seq_++, idx, out});
      }
    }
    return true;
  }

  std::string diagnose(std::uint64_t t) const {
    std::ostringstream msg;
    msg.imbue(std::locale::classic());
    msg << "pipeline deadlock at cycle " << t << ":";
    bool any = false;
    for (std::size_t i = 0; i < s_.channels.size(); ++i) {
      const auto& c = s_.channels[i];
      if (c.consumer < 0 || ch_[i].queue.size() < c.depth) continue;
      msg << " channel '" << c.name << "' is full (" << ch_[i].queue.size() << "/" << c.depth << ")";
      const auto consumer = static_cast<std::size_t>(c.consumer);
      for (auto idx : s_.inputs[consumer])
        if (ch_[idx].queue.empty()) msg << " while its consumer waits on empty channel '" << s_.channels[idx].name << "'";
      if (s_.stages[consumer].barrier >= 0)
        msg << " while '" << s_.stages[consumer].info.name << "' waits for '"
            << s_.stages[static_cast<std::size_t>(s_.stages[consumer].barrier)].info.name << "' to finish";
      msg << ";";
      any = true;
    }
    if (!any) msg << " no channel is full";
    return msg.str();
  }

  CycleReport report(std::uint64_t last_arrival) const {
    CycleReport r;
    r.total_latency_cycles = last_arrival;
    r.clock_period_ns = s_.reuse.clock_period_ns;
    r.latency_us = static_cast<double>(r.total_latency_cycles) * r.clock_period_ns / 1000.0;
    std::uint64_t interval = s_.input_rows;
    for (std::size_t i = 0; i < s_.stages.size(); ++i) {
      const auto& m = s_.stages[i];
      const auto& st = st_[i];
      interval = std::max<std::uint64_t>(interval, m.rows * static_cast<std::uint64_t>(m.ii_cycles));
      r.stall_cycles += st.stalls;
      r.stages.push_back(StageReport{m.info.name, m.ii_cycles, m.pipeline_depth_cycles, m.rows,
                                     st.fired, st.produced, st.first_fire, st.last_fire, st.stalls});
    }
    r.initiation_interval_cycles = interval;
    for (std::size_t i = 0; i < s_.channels.size(); ++i) {
      const auto& c = s_.channels[i];
      r.channels.push_back(ChannelReport{c.name, c.consumer < 0 ? 0 : c.depth, c.lanes, ch_[i].peak,
                                         ch_[i].tokens});
    }
    return r;
  }

  const PipelineSchedule& s_;
  const QTensor* x_;
  SimOptions o_;
  std::vector<std::unique_ptr<StageLogic>> logic_;
  std::vector<ChannelState> ch_;
  std::vector<StageState> st_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  std::uint64_t watchdog_ = 0;
};

}  // namespace

SimResult simulate(const PipelineSchedule& sched, const QTensor& x, const SimOptions& opts) {
  if (opts.functional) {
    if (!sched.model) throw InvariantError("schedule has no model");
    if (x.rows() != sched.input_rows || x.cols() != sched.model->input_shape().cols)
      throw InputError("simulate: input shape does not match the model");
    if (x.format() != sched.model->config.activation_format)
      throw InputError("simulate: input is not in the activation format");
  }
  std::vector<rowops::Row> rows;
  Simulator sim(sched, opts.functional ? &x : nullptr, opts);
  SimResult res;
  res.report = sim.run(&rows);
  if (opts.functional) {
    const std::size_t cols = sched.channels[sched.sink_channel].width;
    res.output = QTensor({rows.size(), cols}, sched.model->config.activation_format);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy(rows[r].begin(), rows[r].end(), res.output.row(r).begin());
  }
  return res;
}

CycleReport simulate_timing(const PipelineSchedule& sched) {
  SimOptions o;
  o.functional = false;
  Simulator sim(sched, nullptr, o);
  return sim.run(nullptr);
}

std::string CycleReport::to_json() const {
  nlohmann::ordered_json j;
  j["total_latency_cycles"] = total_latency_cycles;
  j["initiation_interval_cycles"] = initiation_interval_cycles;
  j["clock_period_ns"] = clock_period_ns;
  j["latency_us"] = latency_us;
  j["stall_cycles"] = stall_cycles;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : stages)
    j["stages"].push_back({{"name", s.name},
                           {"ii_cycles", s.ii_cycles},
                           {"pipeline_depth_cycles", s.pipeline_depth_cycles},
                           {"rows", s.rows},
                           {"consumed", s.consumed},
                           {"produced", s.produced},
                           {"first_fire", s.first_fire},
                           {"last_fire", s.last_fire},
                           {"stall_cycles", s.stall_cycles}});
  j["channels"] = nlohmann::ordered_json::array();
  for (const auto& c : channels)
    j["channels"].push_back({{"name", c.name},
                             {"depth", c.depth},
                             {"lanes", c.lanes},
                             {"peak_occupancy", c.peak_occupancy},
                             {"tokens", c.tokens}});
  return j.dump(2) + "\n";
}

std::string CycleReport::to_table() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "latency: " << total_latency_cycles << " cycles (" << std::fixed << std::setprecision(3)
     << latency_us << " us at " << clock_period_ns << " ns)\n";
  os << "interval: " << initiation_interval_cycles << " cycles, stalls: " << stall_cycles << "\n";
  os << std::left << std::setw(28) << "stage" << std::right << std::setw(6) << "ii" << std::setw(7)
     << "depth" << std::setw(7) << "rows" << std::setw(8) << "first" << std::setw(8) << "last"
     << std::setw(8) << "stalls" << "\n";
  for (const auto& s : stages)
    os << std::left << std::setw(28) << s.name << std::right << std::setw(6) << s.ii_cycles
       << std::setw(7) << s.pipeline_depth_cycles << std::setw(7) << s.rows << std::setw(8)
       << s.first_fire << std::setw(8) << s.last_fire << std::setw(8) << s.stall_cycles << "\n";
  os << std::left << std::setw(48) << "channel" << std::right << std::setw(7) << "depth"
     << std::setw(7) << "lanes" << std::setw(7) << "peak" << "\n";
  for (const auto& c : channels)
    os << std::left << std::setw(48) << c.name << std::right << std::setw(7)
       << (c.depth == 0 ? std::string("-") : std::to_string(c.depth)) << std::setw(7) << c.lanes
       << std::setw(7) << c.peak_occupancy << "\n";
  return os.str();
}

FifoCheckReport fifo_depth_check(const PipelineSchedule& sched, const CycleReport& report) {
  FifoCheckReport out;
  for (std::size_t i = 0; i < sched.channels.size(); ++i) {
    const auto& c = sched.channels[i];
    if (c.consumer < 0) continue;
    const auto& cr = report.channels.at(i);
    if (cr.peak_occupancy < c.depth) continue;

    auto latency_with = [&](std::size_t depth) -> std::uint64_t {
      PipelineSchedule trial = sched;
      trial.channels[i].depth = depth;
      try {
        return simulate_timing(trial).total_latency_cycles;
      } catch (const DeadlockError&) {
        return std::numeric_limits<std::uint64_t>::max();
      }
    };
    // Every token that ever passes fits at this depth, so it cannot stall.
    const std::size_t ample = std::max<std::size_t>(cr.tokens, 1);
    const std::uint64_t target = latency_with(ample);
    std::size_t lo = 1;
    std::size_t hi = ample;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (latency_with(mid) <= target) hi = mid;
      else lo = mid + 1;
    }
    out.flagged.push_back(FifoFlag{c.name, c.depth, cr.peak_occupancy, lo});
  }
  return out;
}

}  // namespace fxformer
