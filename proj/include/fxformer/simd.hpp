// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "fxformer/fixed.hpp"

// Fixed-point dot-product kernels. Every matrix product in the pipeline goes
// through dot(); the scalar variant is the reference and the vector variants
// must agree with it bit for bit.

namespace fxformer::simd {

struct DotFormats {
  FixedFormat lhs;
  FixedFormat rhs;
  FixedFormat acc;
};

/// Returns sum_i cast<acc>(lhs[i] * rhs[i]) accumulated left to right in
/// `acc`, starting from zero. Spans must have equal length.
using DotFn = std::int64_t (*)(std::span<const std::int64_t>, std::span<const std::int64_t>,
                               const DotFormats&);

std::int64_t dot_scalar(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                        const DotFormats& f);

#if defined(__x86_64__) || defined(_M_X64)
#define FXFORMER_HAVE_AVX2_KERNELS 1
std::int64_t dot_avx2(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                      const DotFormats& f);
/// True when the AVX2 kernel takes its vector path for these formats; other
/// cases fall back to dot_scalar internally.
bool avx2_fast_path(const DotFormats& f, std::size_t n);
#endif

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);

/// Selected once from CPUID; FXFORMER_ISA=scalar forces the reference path.
Isa active_isa();
/// Overrides the runtime choice. Throws std::invalid_argument if the CPU
/// lacks the requested extension.
void set_active_isa(Isa isa);

std::int64_t dot(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                 const DotFormats& f);

}  // namespace fxformer::simd
