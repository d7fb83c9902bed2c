// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>

#include "fxformer/simd.hpp"

namespace fxformer::simd {

std::int64_t dot_scalar(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                        const DotFormats& f) {
  if (lhs.size() != rhs.size()) throw std::invalid_argument("dot: length mismatch");
  const int prod_frac = f.lhs.frac_bits() + f.rhs.frac_bits();
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const wide_t p = static_cast<wide_t>(lhs[i]) * static_cast<wide_t>(rhs[i]);
    const std::int64_t term = detail::requantize(p, prod_frac, f.acc);
    sum = add_raw(sum, f.acc, term, f.acc, f.acc);
  }
  return sum;
}

}  // namespace fxformer::simd
