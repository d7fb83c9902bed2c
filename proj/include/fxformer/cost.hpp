// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fxformer/dataflow.hpp"
#include "fxformer/kernels.hpp"

namespace fxformer {

/// Analytical cost constants. The FF/LUT coefficients are illustrative
/// calibration values; only trends across reuse and precision are meaningful.
struct CostCoefficients {
  int dsp_input_width = 18;
  double ff_base = 64.0;        // control registers per stage
  double ff_per_bit = 2.0;      // per operand bit per parallel operation
  double lut_base = 128.0;
  double lut_per_bit = 1.5;
  std::uint64_t bram_block_bits = 36864;
  /// Weight arrays partitioned at least this many ways deep go to BRAM.
  int bram_min_reuse = 2;
};

struct LayerResources {
  std::size_t layer = 0;
  std::string kind;
  std::uint64_t dsp = 0;
  std::uint64_t ff = 0;
  std::uint64_t lut = 0;
  std::uint64_t bram_bits = 0;
  std::uint64_t bram_blocks = 0;
};

struct ResourceReport {
  std::uint64_t dsp = 0;
  std::uint64_t ff = 0;
  std::uint64_t lut = 0;
  std::uint64_t bram_bits = 0;
  std::uint64_t bram_blocks = 0;
  std::vector<LayerResources> layers;

  std::string to_json() const;
  std::string to_csv() const;
  std::string to_table() const;
};

/// 1 when the operand fits the hard multiplier input, else 2.
int dsp_per_multiply(int operand_bits, const CostCoefficients& c = {});
/// ceil(multiplies / reuse) * dsp_per_multiply(operand_bits).
std::uint64_t stage_dsp(std::uint64_t multiplies, int reuse, int operand_bits,
                        const CostCoefficients& c = {});

ResourceReport estimate_resources(const QModel& qm, const ReuseConfig& rc,
                                  const CostCoefficients& c = {});

struct ParetoRow {
  std::string format;
  int frac_bits = 0;
  int reuse = 1;
  ResourceReport resources;
  std::uint64_t interval_cycles = 0;
  std::uint64_t latency_cycles = 0;
  double latency_us = 0.0;
};

/// One row per (format, reuse) pair, formats outermost.
std::vector<ParetoRow> pareto_sweep(const ModelGraph& g, const std::vector<QuantConfig>& formats,
                                    const std::vector<int>& reuses, const ReuseConfig& base,
                                    const CostCoefficients& c = {});
std::string pareto_csv(const std::vector<ParetoRow>& rows);

}  // namespace fxformer
