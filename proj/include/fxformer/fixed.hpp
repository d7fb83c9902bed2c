// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fxformer {

using wide_t = __int128;

enum class Rounding : std::uint8_t { truncate, round_nearest_even };
enum class Overflow : std::uint8_t { saturate, wrap };

/// Parametric two's-complement fixed-point format.
///
/// `integer_bits` counts the bits left of the binary point and includes the
/// sign bit for signed formats, so `fixed<16,6>` spans [-32, 32) with 10
/// fractional bits and `ufixed<7,4>` spans [0, 15.875] in steps of 0.125.
/// Raw payloads are carried in 64-bit integers; unsigned formats are limited
/// to 63 bits so every payload fits.
class FixedFormat {
 public:
  FixedFormat() = default;
  FixedFormat(int total_bits, int integer_bits, bool is_signed = true,
              Rounding rounding = Rounding::truncate,
              Overflow overflow = Overflow::saturate);

  /// Parses `fixed<T,I>` / `ufixed<T,I>` with optional rounding and overflow
  /// tokens: `fixed<16,6,rne,wrap>`. Tokens: trn|rne, sat|wrap.
  static FixedFormat parse(std::string_view text);

  int total_bits() const { return total_bits_; }
  int integer_bits() const { return integer_bits_; }
  int frac_bits() const { return total_bits_ - integer_bits_; }
  bool is_signed() const { return signed_; }
  Rounding rounding() const { return rounding_; }
  Overflow overflow() const { return overflow_; }

  std::int64_t min_raw() const;
  std::int64_t max_raw() const;
  bool contains(std::int64_t raw) const { return raw >= min_raw() && raw <= max_raw(); }

  /// 2^-frac_bits, exact.
  double step() const;
  double min() const;
  double max() const;

  FixedFormat with_rounding(Rounding r) const;
  FixedFormat with_overflow(Overflow o) const;

  /// Round-trips through parse(); policy tokens are only emitted when they
  /// differ from the truncate/saturate default.
  std::string str() const;

  friend bool operator==(const FixedFormat&, const FixedFormat&) = default;

 private:
  int total_bits_ = 16;
  int integer_bits_ = 6;
  bool signed_ = true;
  Rounding rounding_ = Rounding::truncate;
  Overflow overflow_ = Overflow::saturate;
};

struct FixedScalar {
  std::int64_t raw = 0;
  FixedFormat format;

  double value() const;
  friend bool operator==(const FixedScalar&, const FixedScalar&) = default;
};

namespace detail {

/// Re-expresses the exact value `v * 2^-from_frac` on `out`'s grid using
/// `out`'s rounding, then applies `out`'s overflow policy. For wrap formats
/// `v` may itself be a value reduced modulo 2^128.
std::int64_t requantize(wide_t v, int from_frac, const FixedFormat& out);

/// Rounding right shift of a 128-bit value; `shift` may exceed 127.
wide_t round_shift(wide_t v, int shift, Rounding rounding);

}  // namespace detail

/// Real -> fixed with the format's rounding and overflow policy.
/// Throws std::domain_error("non-finite input") for NaN/inf.
std::int64_t quantize_raw(double x, const FixedFormat& f);
FixedScalar quantize(double x, const FixedFormat& f);

/// Exact raw * 2^-frac (for frac <= 64 and |raw| < 2^53; otherwise the
/// nearest double).
double to_real(std::int64_t raw, const FixedFormat& f);
double dequantize(const FixedScalar& v);

std::int64_t cast_raw(std::int64_t raw, const FixedFormat& from, const FixedFormat& to);
FixedScalar cast(const FixedScalar& v, const FixedFormat& to);

std::int64_t add_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out);
std::int64_t sub_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out);
std::int64_t mul_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out);

/// Sum and product computed exactly in 128-bit space, then cast to `out`.
FixedScalar fx_add(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out);
FixedScalar fx_sub(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out);
FixedScalar fx_mul(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out);

/// Left-to-right summation in `acc`, each term cast to `acc` first.
/// Requires acc.integer_bits() >= every term's integer_bits.
FixedScalar accumulate(std::span<const FixedScalar> terms, const FixedFormat& acc);

/// Row-major tensor of raw payloads sharing one format.
class QTensor {
 public:
  QTensor() = default;
  QTensor(std::vector<std::size_t> shape, const FixedFormat& format);
  /// Throws std::invalid_argument on length mismatch or out-of-range payloads.
  QTensor(std::vector<std::size_t> shape, std::vector<std::int64_t> raw, const FixedFormat& format);

  static QTensor from_real(std::vector<std::size_t> shape, std::span<const double> values,
                           const FixedFormat& format);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const FixedFormat& format() const { return format_; }
  std::size_t size() const { return raw_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_.front(); }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const std::int64_t> raw() const { return raw_; }
  std::span<std::int64_t> raw() { return raw_; }
  std::span<const std::int64_t> row(std::size_t r) const;
  std::span<std::int64_t> row(std::size_t r);

  FixedScalar at(std::size_t flat) const { return {raw_.at(flat), format_}; }
  std::vector<double> to_real() const;

  friend bool operator==(const QTensor&, const QTensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<std::int64_t> raw_;
  FixedFormat format_;
};

}  // namespace fxformer
