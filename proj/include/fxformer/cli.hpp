// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fxformer/cost.hpp"
#include "fxformer/dataflow.hpp"
#include "fxformer/dataset.hpp"
#include "fxformer/kernels.hpp"

namespace fxformer {

enum class RunMode : std::uint8_t { float_ref, fixed, sim };
std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);

/// Everything a command needs. Defaults match configs/default.json.
struct RunConfig {
  std::string model;
  std::string data;  // empty: synthetic dataset
  std::string out;   // empty: stdout
  std::string trace;
  RunMode mode = RunMode::fixed;
  QuantConfig quant;
  ReuseConfig reuse;
  std::size_t fifo_depth = 0;
  CostCoefficients cost;
  std::uint64_t seed = 1;
  std::size_t samples = 200;
  std::vector<int> sweep_frac_bits{4, 6, 8, 10, 12, 14, 16};
  std::vector<int> sweep_reuse{1, 2, 4};
};

/// Overlays the keys present in `json_text` onto `base`. Unknown keys and
/// bad values throw InputError.
RunConfig parse_run_config(std::string_view json_text, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});
std::string dump_run_config(const RunConfig& c);

struct SweepBitsRow {
  int frac_bits = 0;
  double auc = 0.0;      // raw_auc relative to the float reference's own AUC
  double raw_auc = 0.0;  // agreement AUC of the fixed outputs
  double max_abs_err = 0.0;
  double agreement = 0.0;
};

/// Float outputs give the reference labels; each fixed-point width is scored
/// against them. Integer bits come from the activation format of `base`.
std::vector<SweepBitsRow> sweep_bits(const ModelGraph& g, const Dataset& d, const QuantConfig& base,
                                     const std::vector<int>& frac_bits, std::ostream* warn = nullptr);
std::string sweep_bits_csv(const std::vector<SweepBitsRow>& rows);

struct SweepReuseRow {
  int reuse = 1;
  std::uint64_t interval_cycles = 0;
  std::uint64_t latency_cycles = 0;
  double latency_us = 0.0;
  ResourceReport resources;
};

std::vector<SweepReuseRow> sweep_reuse(const QModel& qm, const ReuseConfig& base,
                                       const std::vector<int>& reuses, const ScheduleOptions& opts,
                                       const CostCoefficients& cost);
std::string sweep_reuse_csv(const std::vector<SweepReuseRow>& rows);

/// Model outputs for every sample, one row each.
Matrix run_float(const ModelGraph& g, const Dataset& d);
Matrix run_fixed(const QModel& qm, const Dataset& d);

/// Entry point of the command-line tool; args excludes the program name.
/// Returns 0 on success, 2 for input errors, 3 for internal failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fxformer
