// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fxformer/kernels.hpp"
#include "fxformer/stream.hpp"

namespace fxformer {

/// Depth contributed by each datapath step.
///   multiply:    ceil(log2(fan_in)) + multiply_base
///   lookup:      lookup
///   elementwise: ceil(log2(fan_in)) + elementwise
/// A stage with multiplies and reuse R adds R - 1 cycles for the shared DSPs.
struct StageCosts {
  int multiply_base = 3;
  int lookup = 2;
  int elementwise = 1;
};

struct ReuseConfig {
  int reuse = 1;
  double clock_period_ns = 5.0;
  std::map<std::size_t, int> layer_reuse;  // layer index -> R

  int reuse_for(std::size_t layer) const;
  /// Throws std::invalid_argument unless every R is a power of two and the
  /// clock period is finite and positive.
  void validate() const;
};

struct ScheduleOptions {
  std::size_t fifo_depth = 0;  // 0 selects 2 * seq_len
  std::map<std::string, std::size_t> channel_depth;
  StageCosts costs;
};

struct StageModel {
  StageInfo info;
  int reuse = 1;
  int ii_cycles = 1;
  int pipeline_depth_cycles = 1;
  std::size_t rows = 0;
  int barrier = -1;  // global stage index
};

struct FifoChannel {
  std::string name;
  int producer = -1;  // stage index, -1 for the input source
  int consumer = -1;  // stage index, -1 for the output sink
  int port = 0;
  std::size_t depth = 1;  // in row tokens
  std::size_t lanes = 1;
  std::size_t width = 0;
};

struct PipelineSchedule {
  const QModel* model = nullptr;  // must outlive the schedule
  ReuseConfig reuse;
  ScheduleOptions options;
  std::vector<StageModel> stages;
  std::vector<FifoChannel> channels;
  std::vector<std::vector<std::size_t>> inputs;   // per stage, per port
  std::vector<std::vector<std::size_t>> outputs;  // per stage, fan-out
  std::vector<std::size_t> source_outputs;
  std::size_t sink_channel = 0;
  std::size_t input_rows = 0;
  std::size_t output_rows = 0;

  const FifoChannel& channel(std::string_view name) const;
};

PipelineSchedule build_schedule(const QModel& qm, const ReuseConfig& rc,
                                const ScheduleOptions& opts = {});

/// Datapath depth of one stage under reuse factor `reuse`.
int stage_depth(const StageInfo& s, int reuse, const StageCosts& costs);

struct StageReport {
  std::string name;
  int ii_cycles = 0;
  int pipeline_depth_cycles = 0;
  std::size_t rows = 0;
  std::size_t consumed = 0;
  std::size_t produced = 0;
  std::int64_t first_fire = -1;
  std::int64_t last_fire = -1;
  std::uint64_t stall_cycles = 0;
  friend bool operator==(const StageReport&, const StageReport&) = default;
};

struct ChannelReport {
  std::string name;
  std::size_t depth = 0;
  std::size_t lanes = 0;
  std::size_t peak_occupancy = 0;
  std::size_t tokens = 0;
  friend bool operator==(const ChannelReport&, const ChannelReport&) = default;
};

struct CycleReport {
  std::uint64_t total_latency_cycles = 0;
  std::uint64_t initiation_interval_cycles = 0;
  double clock_period_ns = 0.0;
  double latency_us = 0.0;
  std::uint64_t stall_cycles = 0;
  std::vector<StageReport> stages;
  std::vector<ChannelReport> channels;

  std::string to_json() const;
  std::string to_table() const;
  friend bool operator==(const CycleReport&, const CycleReport&) = default;
};

/// Raised when no token moves for max-depth * total-rows cycles.
class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  /// Compute values; when false only timing is modelled.
  bool functional = true;
  /// Per-cycle channel occupancy CSV (cycle, one column per channel).
  std::ostream* trace = nullptr;
  OpCounter* ops = nullptr;
};

struct SimResult {
  QTensor output;
  CycleReport report;
};

SimResult simulate(const PipelineSchedule& sched, const QTensor& x, const SimOptions& opts = {});
CycleReport simulate_timing(const PipelineSchedule& sched);

struct FifoFlag {
  std::string channel;
  std::size_t depth = 0;
  std::size_t peak_occupancy = 0;
  std::size_t proposed_depth = 0;
};

struct FifoCheckReport {
  std::vector<FifoFlag> flagged;
};

/// Flags channels that filled up and proposes, per channel, the smallest
/// depth that keeps the unconstrained latency (binary search, re-simulating).
FifoCheckReport fifo_depth_check(const PipelineSchedule& sched, const CycleReport& report);

}  // namespace fxformer
