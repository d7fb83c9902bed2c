// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Compiled with -mavx2; only reached through the runtime dispatcher.

#include <immintrin.h>

#include <stdexcept>

#include "fxformer/simd.hpp"

namespace fxformer::simd {

namespace {

constexpr std::size_t kMaxFastLength = std::size_t{1} << 14;

bool fits_int32_lane(const FixedFormat& f) {
  return f.is_signed() ? f.total_bits() <= 32 : f.total_bits() <= 31;
}

inline __m256i srai64(__m256i x, __m128i count, __m256i sign_bit) {
  // Logical shift, then sign-extend from the shifted sign position.
  const __m256i t = _mm256_srl_epi64(x, count);
  return _mm256_sub_epi64(_mm256_xor_si256(t, sign_bit), sign_bit);
}

inline std::int64_t hsum(__m256i v) {
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), v);
  // Unsigned adds: modular, so wrap-mode sums stay well defined.
  std::uint64_t s = 0;
  for (auto l : lanes) s += static_cast<std::uint64_t>(l);
  return static_cast<std::int64_t>(s);
}

}  // namespace

bool avx2_fast_path(const DotFormats& f, std::size_t n) {
  const int shift = f.lhs.frac_bits() + f.rhs.frac_bits() - f.acc.frac_bits();
  return fits_int32_lane(f.lhs) && fits_int32_lane(f.rhs) && shift >= 0 && shift <= 62 &&
         f.acc.total_bits() <= 48 && n <= kMaxFastLength;
}

std::int64_t dot_avx2(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                      const DotFormats& f) {
  if (lhs.size() != rhs.size()) throw std::invalid_argument("dot: length mismatch");
  const std::size_t n = lhs.size();
  if (!avx2_fast_path(f, n)) return dot_scalar(lhs, rhs, f);

  const int shift = f.lhs.frac_bits() + f.rhs.frac_bits() - f.acc.frac_bits();
  const bool rne = f.acc.rounding() == Rounding::round_nearest_even && shift > 0;
  const bool saturate = f.acc.overflow() == Overflow::saturate;
  const int acc_bits = f.acc.total_bits();

  const __m128i shift_count = _mm_cvtsi32_si128(shift);
  const __m256i sign_bit = _mm256_set1_epi64x(static_cast<std::int64_t>(std::uint64_t{1} << (63 - shift)));
  const __m256i rem_mask = _mm256_set1_epi64x(shift > 0 ? (std::int64_t{1} << shift) - 1 : 0);
  const __m256i half = _mm256_set1_epi64x(shift > 0 ? std::int64_t{1} << (shift - 1) : 0);
  const __m256i one = _mm256_set1_epi64x(1);
  const __m256i lo = _mm256_set1_epi64x(f.acc.min_raw());
  const __m256i hi = _mm256_set1_epi64x(f.acc.max_raw());
  const __m128i wrap_count = _mm_cvtsi32_si128(64 - acc_bits);
  const __m256i wrap_sign = _mm256_set1_epi64x(static_cast<std::int64_t>(std::uint64_t{1} << (acc_bits - 1)));
  const __m256i wrap_mask = _mm256_set1_epi64x(f.acc.max_raw());
  const __m256i zero = _mm256_setzero_si256();

  __m256i sum = zero;
  __m256i abs_sum = zero;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(lhs.data() + i));
    const __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(rhs.data() + i));
    const __m256i p = _mm256_mul_epi32(a, b);
    __m256i q = srai64(p, shift_count, sign_bit);
    if (rne) {
      const __m256i rem = _mm256_and_si256(p, rem_mask);
      const __m256i odd = _mm256_cmpeq_epi64(_mm256_and_si256(q, one), one);
      const __m256i up = _mm256_or_si256(_mm256_cmpgt_epi64(rem, half),
                                         _mm256_and_si256(_mm256_cmpeq_epi64(rem, half), odd));
      q = _mm256_sub_epi64(q, up);  // up is all-ones where rounding increments
    }
    if (saturate) {
      q = _mm256_blendv_epi8(q, lo, _mm256_cmpgt_epi64(lo, q));
      q = _mm256_blendv_epi8(q, hi, _mm256_cmpgt_epi64(q, hi));
    } else if (f.acc.is_signed()) {
      const __m256i low = _mm256_srl_epi64(_mm256_sll_epi64(q, wrap_count), wrap_count);
      q = _mm256_sub_epi64(_mm256_xor_si256(low, wrap_sign), wrap_sign);
    } else {
      q = _mm256_and_si256(q, wrap_mask);
    }
    sum = _mm256_add_epi64(sum, q);
    const __m256i neg = _mm256_cmpgt_epi64(zero, q);
    abs_sum = _mm256_add_epi64(abs_sum, _mm256_sub_epi64(_mm256_xor_si256(q, neg), neg));
  }

  std::int64_t total = hsum(sum);
  std::int64_t abs_total = hsum(abs_sum);
  const int prod_frac = f.lhs.frac_bits() + f.rhs.frac_bits();
  for (; i < n; ++i) {
    const wide_t p = static_cast<wide_t>(lhs[i]) * static_cast<wide_t>(rhs[i]);
    const std::int64_t t = detail::requantize(p, prod_frac, f.acc);
    total = static_cast<std::int64_t>(static_cast<std::uint64_t>(total) + static_cast<std::uint64_t>(t));
    abs_total += t < 0 ? -t : t;
  }

  if (!saturate) return detail::requantize(total, f.acc.frac_bits(), f.acc);
  // Every prefix sum lies within [-abs_total, abs_total]; if that interval is
  // inside the accumulator range, sequential saturation never triggers.
  if (abs_total <= f.acc.max_raw() && (f.acc.is_signed() ? -abs_total >= f.acc.min_raw() : true)) {
    if (f.acc.is_signed() || total == abs_total) return total;
  }
  return dot_scalar(lhs, rhs, f);
}

}  // namespace fxformer::simd
