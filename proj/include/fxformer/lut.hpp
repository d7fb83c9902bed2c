// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fxformer/fixed.hpp"

namespace fxformer {

enum class LutKind : std::uint8_t { exp, reciprocal, inv_sqrt };

std::string_view to_string(LutKind kind);
LutKind parse_lut_kind(std::string_view s);

/// Real function a table approximates.
double lut_function(LutKind kind, double x);

struct LutSpec {
  LutKind kind = LutKind::exp;
  int table_size = 1024;
  double input_lo = -8.0;
  double input_hi = 0.0;
  FixedFormat entry_format;

  double cell_width() const { return (input_hi - input_lo) / table_size; }
  /// Throws std::invalid_argument("invalid LUT domain") for a bad range and
  /// for table sizes that are not a power of two >= 2.
  void validate() const;
};

/// Uniform lookup table sampled at cell midpoints:
/// entries[i] = quantize(f(lo + (i + 0.5) * cell), entry_format).
class LutTable {
 public:
  explicit LutTable(const LutSpec& spec);
  LutTable(const LutTable& other);
  LutTable& operator=(const LutTable& other);

  const LutSpec& spec() const { return spec_; }
  std::span<const std::int64_t> entries() const { return entries_; }
  double midpoint(std::size_t index) const;

  /// Cell index for a real input; out-of-range inputs clamp to the boundary
  /// cell and bump the saturation counter.
  std::size_t index_of(double x) const;
  FixedScalar lookup(const FixedScalar& x) const;
  std::int64_t lookup_raw(std::int64_t raw, const FixedFormat& fmt) const;

  /// Upper bound on |lookup(x) - f(x)| for in-range x:
  /// max |f'| over the domain * cell width + one entry step.
  double error_bound() const;

  std::uint64_t saturation_count() const { return saturations_.load(std::memory_order_relaxed); }
  void reset_saturation_count() const { saturations_.store(0, std::memory_order_relaxed); }

 private:
  LutSpec spec_;
  std::vector<std::int64_t> entries_;
  mutable std::atomic<std::uint64_t> saturations_{0};
};

LutTable build_lut(const LutSpec& spec);

}  // namespace fxformer
