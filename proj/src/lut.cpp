// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/lut.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace fxformer {

std::string_view to_string(LutKind kind) {
  switch (kind) {
    case LutKind::exp: return "exp";
    case LutKind::reciprocal: return "reciprocal";
    case LutKind::inv_sqrt: return "inv_sqrt";
  }
  return "unknown";
}

LutKind parse_lut_kind(std::string_view s) {
  if (s == "exp") return LutKind::exp;
  if (s == "reciprocal") return LutKind::reciprocal;
  if (s == "inv_sqrt") return LutKind::inv_sqrt;
  throw std::invalid_argument("unknown LUT kind '" + std::string(s) + "'");
}

double lut_function(LutKind kind, double x) {
  switch (kind) {
    case LutKind::exp: return std::exp(x);
    case LutKind::reciprocal: return 1.0 / x;
    case LutKind::inv_sqrt: return 1.0 / std::sqrt(x);
  }
  return 0.0;
}

void LutSpec::validate() const {
  const bool finite = std::isfinite(input_lo) && std::isfinite(input_hi);
  const bool positive_needed = kind != LutKind::exp;
  if (!finite || !(input_lo < input_hi) || (positive_needed && !(input_lo > 0.0)))
    throw std::invalid_argument("invalid LUT domain");
  if (table_size < 2 || !std::has_single_bit(static_cast<unsigned>(table_size)))
    throw std::invalid_argument("invalid LUT domain: table_size must be a power of two >= 2");
}

LutTable::LutTable(const LutSpec& spec) : spec_(spec) {
  spec_.validate();
  entries_.resize(static_cast<std::size_t>(spec_.table_size));
  for (std::size_t i = 0; i < entries_.size(); ++i)
    entries_[i] = quantize_raw(lut_function(spec_.kind, midpoint(i)), spec_.entry_format);
}

LutTable::LutTable(const LutTable& other)
    : spec_(other.spec_), entries_(other.entries_), saturations_(other.saturation_count()) {}

LutTable& LutTable::operator=(const LutTable& other) {
  spec_ = other.spec_;
  entries_ = other.entries_;
  saturations_.store(other.saturation_count(), std::memory_order_relaxed);
  return *this;
}

double LutTable::midpoint(std::size_t index) const {
  return spec_.input_lo + (static_cast<double>(index) + 0.5) * spec_.cell_width();
}

std::size_t LutTable::index_of(double x) const {
  const double pos = std::floor((x - spec_.input_lo) / spec_.cell_width());
  if (pos < 0.0) {
    saturations_.fetch_add(1, std::memory_order_relaxed);
    return 0;
  }
  const auto last = static_cast<double>(spec_.table_size - 1);
  if (pos > last) {
    saturations_.fetch_add(1, std::memory_order_relaxed);
    return static_cast<std::size_t>(spec_.table_size - 1);
  }
  return static_cast<std::size_t>(pos);
}

FixedScalar LutTable::lookup(const FixedScalar& x) const {
  return {lookup_raw(x.raw, x.format), spec_.entry_format};
}

std::int64_t LutTable::lookup_raw(std::int64_t raw, const FixedFormat& fmt) const {
  return entries_[index_of(to_real(raw, fmt))];
}

double LutTable::error_bound() const {
  const double lo = spec_.input_lo;
  const double hi = spec_.input_hi;
  double slope = 0.0;
  switch (spec_.kind) {
    case LutKind::exp: slope = std::exp(hi); break;
    case LutKind::reciprocal: slope = 1.0 / (lo * lo); break;
    case LutKind::inv_sqrt: slope = 0.5 * std::pow(lo, -1.5); break;
  }
  return slope * spec_.cell_width() + spec_.entry_format.step();
}

LutTable build_lut(const LutSpec& spec) { return LutTable(spec); }

}  // namespace fxformer
