// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fxformer/dataflow.hpp"
#include "test_util.hpp"

using namespace fxformer;
using namespace fxformer::testing;

namespace {

ModelGraph dense_chain(Rng& rng, int seq, std::vector<int> widths) {
  ModelGraph g;
  g.seq_len = seq;
  g.input_dim = widths.front();
  for (std::size_t i = 1; i < widths.size(); ++i)
    g.layers.emplace_back(random_dense(rng, widths[i - 1], widths[i], Activation::relu));
  return g;
}

ReuseConfig with_reuse(int r) {
  ReuseConfig rc;
  rc.reuse = r;
  return rc;
}

}  // namespace

TEST_CASE("single dense layer fills like a textbook pipeline") {
  Rng rng(41);
  for (int seq : {1, 5, 50}) {
    const QModel qm = quantize_model(dense_chain(rng, seq, {6, 4}), QuantConfig{});
    const auto sched = build_schedule(qm, with_reuse(1));
    REQUIRE(sched.stages.size() == 1);
    const auto& st = sched.stages[0];
    CHECK(st.ii_cycles == 1);
    CHECK(st.pipeline_depth_cycles == 3 + 3 + 1);  // ceil(log2 6) + 3, then relu
    const CycleReport r = simulate_timing(sched);
    CHECK(r.total_latency_cycles == static_cast<std::uint64_t>(st.pipeline_depth_cycles + seq - 1));
    CHECK(r.initiation_interval_cycles == static_cast<std::uint64_t>(seq));
    CHECK(r.latency_us == doctest::Approx(r.total_latency_cycles * 5.0 / 1000));
  }
}

TEST_CASE("stage depth table") {
  StageInfo s;
  s.ops = {{OpKind::multiply, 1}};
  CHECK(stage_depth(s, 1, {}) == 3);
  s.ops = {{OpKind::multiply, 16}};
  CHECK(stage_depth(s, 1, {}) == 7);
  s.ops = {{OpKind::multiply, 17}};
  CHECK(stage_depth(s, 1, {}) == 8);
  s.ops = {{OpKind::lookup, 1}};
  CHECK(stage_depth(s, 1, {}) == 2);
  s.ops = {{OpKind::elementwise, 1}};
  CHECK(stage_depth(s, 1, {}) == 1);
}

TEST_CASE("reuse doubles multiply-stage II and leaves values unchanged") {
  for (const char* name : {"engine", "btag", "gw"}) {
    CAPTURE(name);
    const QModel qm = quantize_model(build_example_model(name), QuantConfig{});
    const auto s1 = build_schedule(qm, with_reuse(1));
    const auto s2 = build_schedule(qm, with_reuse(2));
    const auto s4 = build_schedule(qm, with_reuse(4));
    for (std::size_t i = 0; i < s1.stages.size(); ++i) {
      const bool mul = s1.stages[i].info.multiplies > 0;
      CHECK(s1.stages[i].ii_cycles == 1);
      CHECK(s2.stages[i].ii_cycles == (mul ? 2 : 1));
      CHECK(s4.stages[i].ii_cycles == (mul ? 4 : 1));
    }
    const auto c1 = simulate_timing(s1), c2 = simulate_timing(s2), c4 = simulate_timing(s4);
    CHECK(c1.total_latency_cycles < c2.total_latency_cycles);
    CHECK(c2.total_latency_cycles < c4.total_latency_cycles);
    CHECK(c1.initiation_interval_cycles < c2.initiation_interval_cycles);
    CHECK(c2.initiation_interval_cycles < c4.initiation_interval_cycles);
    CHECK(c1.total_latency_cycles >= static_cast<std::uint64_t>(std::max_element(
                                          s1.stages.begin(), s1.stages.end(),
                                          [](const auto& a, const auto& b) {
                                            return a.pipeline_depth_cycles < b.pipeline_depth_cycles;
                                          })->pipeline_depth_cycles));
  }
}

TEST_CASE("lanes follow producer width over reuse") {
  const QModel qm = quantize_model(build_example_model("engine"), QuantConfig{});
  for (int r : {1, 2, 4}) {
    const auto s = build_schedule(qm, with_reuse(r));
    for (const auto& c : s.channels)
      CHECK(c.lanes == std::max<std::size_t>(1, (c.width + r - 1) / static_cast<std::size_t>(r)));
  }
}

TEST_CASE("simulation is transparent, deterministic and conserves tokens") {
  Rng rng(42);
  for (int t = 0; t < 60; ++t) {
    CAPTURE(t);
    const ModelGraph g = random_model(rng);
    const QModel qm = quantize_model(g, QuantConfig{});
    const QTensor x = quantize_input(qm, random_input(rng, g.input_shape().rows, g.input_shape().cols, 2.0));
    const QTensor ref = fixed_forward(qm, x);
    for (int r : {1, 2, 4}) {
      const auto sched = build_schedule(qm, with_reuse(r));
      const SimResult a = simulate(sched, x);
      REQUIRE(a.output == ref);
      const SimResult b = simulate(sched, x);
      REQUIRE(a.report == b.report);
      REQUIRE(simulate_timing(sched) == a.report);
      for (std::size_t i = 0; i < sched.stages.size(); ++i) {
        for (auto ci : sched.outputs[i]) REQUIRE(a.report.channels[ci].tokens == a.report.stages[i].produced);
      }
      REQUIRE(a.report.channels[sched.sink_channel].tokens == sched.output_rows);
      for (std::size_t ci = 0; ci < sched.channels.size(); ++ci)
        if (sched.channels[ci].consumer >= 0) REQUIRE(a.report.channels[ci].peak_occupancy <= sched.channels[ci].depth);
    }
  }
}

TEST_CASE("token counts are seq_len before pooling and one after") {
  const QModel qm = quantize_model(build_example_model("gw"), QuantConfig{});
  const auto sched = build_schedule(qm, with_reuse(1));
  const CycleReport r = simulate_timing(sched);
  bool pooled = false;
  for (std::size_t i = 0; i < sched.stages.size(); ++i) {
    CHECK(r.stages[i].consumed == sched.stages[i].rows);
    CHECK(sched.stages[i].rows == (pooled ? 1u : 100u));
    if (sched.stages[i].info.name.find("pool") != std::string::npos) pooled = true;
  }
  CHECK(pooled);
  CHECK(r.channels[sched.sink_channel].tokens == 1);
}

TEST_CASE("undersized FIFOs deadlock with a diagnostic") {
  const QModel qm = quantize_model(build_example_model("engine"), QuantConfig{});
  ScheduleOptions o;
  o.fifo_depth = 2;
  const auto sched = build_schedule(qm, with_reuse(1), o);
  CHECK_THROWS_WITH_AS(simulate_timing(sched), doctest::Contains("L1.mha.project->L1.mha.score"), DeadlockError);
  const QTensor x = quantize_input(qm, Matrix(50, 1));
  CHECK_THROWS_AS(simulate(sched, x), DeadlockError);
}

TEST_CASE("fifo depth check") {
  Rng rng(43);
  const QModel qm = quantize_model(dense_chain(rng, 20, {4, 8, 4, 2}), QuantConfig{});
  const auto sched = build_schedule(qm, with_reuse(1));
  CHECK(fifo_depth_check(sched, simulate_timing(sched)).flagged.empty());

  ReuseConfig slow;
  slow.layer_reuse[1] = 4;
  ScheduleOptions o;
  o.channel_depth["L0.dense->L1.dense"] = 1;
  const auto tight = build_schedule(qm, slow, o);
  const auto rep = fifo_depth_check(tight, simulate_timing(tight));
  REQUIRE(rep.flagged.size() == 1);
  CHECK(rep.flagged[0].channel == "L0.dense->L1.dense");
  CHECK(rep.flagged[0].peak_occupancy == 1);
}

TEST_CASE("proposed depth for the gw score->weighted channel matches a linear search") {
  const QModel qm = quantize_model(build_example_model("gw"), QuantConfig{});
  const std::string name = "L1.mha.score->L1.mha.weighted";
  auto latency = [&](std::size_t depth) -> std::uint64_t {
    ScheduleOptions o;
    o.channel_depth[name] = depth;
    try {
      return simulate_timing(build_schedule(qm, with_reuse(2), o)).total_latency_cycles;
    } catch (const DeadlockError&) {
      return std::numeric_limits<std::uint64_t>::max();
    }
  };
  const std::uint64_t best = latency(100);
  std::size_t minimal = 1;
  while (latency(minimal) > best) ++minimal;

  ScheduleOptions o;
  o.channel_depth[name] = 1;
  const auto sched = build_schedule(qm, with_reuse(2), o);
  const auto rep = fifo_depth_check(sched, simulate_timing(sched));
  bool found = false;
  for (const auto& f : rep.flagged)
    if (f.channel == name) {
      found = true;
      CHECK(f.proposed_depth == minimal);
    }
  CHECK(found);
}

TEST_CASE("trace and reports") {
  Rng rng(44);
  const QModel qm = quantize_model(dense_chain(rng, 3, {2, 2}), QuantConfig{});
  const auto sched = build_schedule(qm, with_reuse(1));
  std::ostringstream trace;
  SimOptions so;
  so.trace = &trace;
  const SimResult r = simulate(sched, quantize_input(qm, Matrix(3, 2)), so);
  std::istringstream in(trace.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "cycle,input->L0.dense,L0.dense->output");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows >= r.report.total_latency_cycles);
  CHECK(r.report.to_json().find("\"total_latency_cycles\"") != std::string::npos);
  CHECK(r.report.to_table().find("L0.dense") != std::string::npos);
}

TEST_CASE("reuse config validation") {
  ReuseConfig rc;
  rc.reuse = 3;
  CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
  rc.reuse = 8;
  CHECK_NOTHROW(rc.validate());
  rc.clock_period_ns = 0;
  CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
  rc.clock_period_ns = 4;
  rc.layer_reuse[2] = 6;
  CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
  rc.layer_reuse[2] = 2;
  CHECK(rc.reuse_for(2) == 2);
  CHECK(rc.reuse_for(1) == 8);
}
