// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/fixed.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fxformer {

namespace {

constexpr wide_t kWideMax = static_cast<wide_t>((~static_cast<unsigned __int128>(0)) >> 1);
constexpr wide_t kWideMin = -kWideMax - 1;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(std::string_view s, std::string_view whole) {
  auto t = trim(s);
  int v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw std::invalid_argument("bad fixed-point format '" + std::string(whole) + "'");
  return v;
}

std::int64_t clamp_to(wide_t v, const FixedFormat& f) {
  const wide_t lo = f.min_raw();
  const wide_t hi = f.max_raw();
  if (v < lo) return f.min_raw();
  if (v > hi) return f.max_raw();
  return static_cast<std::int64_t>(v);
}

std::int64_t wrap_to(wide_t v, const FixedFormat& f) {
  const int t = f.total_bits();
  const auto u = static_cast<unsigned __int128>(v);
  const auto mask = (static_cast<unsigned __int128>(1) << t) - 1;
  auto low = u & mask;
  if (f.is_signed() && t > 0 && ((low >> (t - 1)) & 1)) {
    // sign-extend
    return static_cast<std::int64_t>(static_cast<wide_t>(low) - (static_cast<wide_t>(1) << t));
  }
  return static_cast<std::int64_t>(low);
}

std::int64_t apply_overflow(wide_t v, const FixedFormat& f) {
  return f.overflow() == Overflow::saturate ? clamp_to(v, f) : wrap_to(v, f);
}

std::int64_t extreme(bool negative, const FixedFormat& f) {
  return negative ? f.min_raw() : f.max_raw();
}

}  // namespace

FixedFormat::FixedFormat(int total_bits, int integer_bits, bool is_signed, Rounding rounding,
                         Overflow overflow)
    : total_bits_(total_bits),
      integer_bits_(integer_bits),
      signed_(is_signed),
      rounding_(rounding),
      overflow_(overflow) {
  if (total_bits < 1 || total_bits > 64)
    throw std::invalid_argument("fixed-point total_bits must be in [1, 64]");
  if (!is_signed && total_bits > 63)
    throw std::invalid_argument("unsigned fixed-point formats are limited to 63 bits");
  if (integer_bits < 0 || integer_bits > total_bits)
    throw std::invalid_argument("fixed-point integer_bits must be in [0, total_bits]");
}

FixedFormat FixedFormat::parse(std::string_view text) {
  const std::string s = trim(text);
  bool is_signed = true;
  std::string_view body;
  if (s.rfind("ufixed<", 0) == 0) {
    is_signed = false;
    body = std::string_view(s).substr(7);
  } else if (s.rfind("fixed<", 0) == 0) {
    body = std::string_view(s).substr(6);
  } else {
    throw std::invalid_argument("bad fixed-point format '" + s + "'");
  }
  if (body.empty() || body.back() != '>')
    throw std::invalid_argument("bad fixed-point format '" + s + "'");
  body.remove_suffix(1);

  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    auto comma = body.find(',', pos);
    parts.push_back(trim(body.substr(pos, comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (parts.size() < 2 || parts.size() > 4)
    throw std::invalid_argument("bad fixed-point format '" + s + "'");

  Rounding rounding = Rounding::truncate;
  Overflow overflow = Overflow::saturate;
  for (std::size_t i = 2; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p == "trn") rounding = Rounding::truncate;
    else if (p == "rne") rounding = Rounding::round_nearest_even;
    else if (p == "sat") overflow = Overflow::saturate;
    else if (p == "wrap") overflow = Overflow::wrap;
    else throw std::invalid_argument("bad fixed-point policy '" + p + "' in '" + s + "'");
  }
  return FixedFormat(parse_int(parts[0], s), parse_int(parts[1], s), is_signed, rounding, overflow);
}

std::int64_t FixedFormat::min_raw() const {
  if (!signed_) return 0;
  if (total_bits_ == 64) return std::numeric_limits<std::int64_t>::min();
  return -(std::int64_t{1} << (total_bits_ - 1));
}

std::int64_t FixedFormat::max_raw() const {
  if (signed_) {
    if (total_bits_ == 64) return std::numeric_limits<std::int64_t>::max();
    return (std::int64_t{1} << (total_bits_ - 1)) - 1;
  }
  return static_cast<std::int64_t>((std::uint64_t{1} << total_bits_) - 1);
}

double FixedFormat::step() const { return std::ldexp(1.0, -frac_bits()); }
double FixedFormat::min() const { return to_real(min_raw(), *this); }
double FixedFormat::max() const { return to_real(max_raw(), *this); }

FixedFormat FixedFormat::with_rounding(Rounding r) const {
  FixedFormat f = *this;
  f.rounding_ = r;
  return f;
}

FixedFormat FixedFormat::with_overflow(Overflow o) const {
  FixedFormat f = *this;
  f.overflow_ = o;
  return f;
}

std::string FixedFormat::str() const {
  std::string s = signed_ ? "fixed<" : "ufixed<";
  s += std::to_string(total_bits_) + "," + std::to_string(integer_bits_);
  if (rounding_ != Rounding::truncate) s += ",rne";
  if (overflow_ != Overflow::saturate) s += ",wrap";
  return s + ">";
}

double FixedScalar::value() const { return to_real(raw, format); }

namespace detail {

wide_t round_shift(wide_t v, int shift, Rounding rounding) {
  if (shift <= 0) return v;
  if (shift >= 128) {
    // |v| <= 2^127 <= 2^(shift-1): the magnitude is at most one half.
    if (rounding == Rounding::truncate) return v < 0 ? -1 : 0;
    return 0;
  }
  wide_t q = v >> shift;  // arithmetic: floor
  if (rounding == Rounding::truncate) return q;
  const wide_t rem = v - static_cast<wide_t>(static_cast<unsigned __int128>(q) << shift);
  const wide_t half = static_cast<wide_t>(1) << (shift - 1);
  if (rem > half || (rem == half && (q & 1))) ++q;
  return q;
}

std::int64_t requantize(wide_t v, int from_frac, const FixedFormat& out) {
  const int shift = out.frac_bits() - from_frac;
  if (shift > 0) {
    if (out.overflow() == Overflow::wrap) {
      if (shift >= 128) return 0;
      v = static_cast<wide_t>(static_cast<unsigned __int128>(v) << shift);
      return wrap_to(v, out);
    }
    if (v == 0) return 0;
    if (shift >= 127 || v > (kWideMax >> shift) || v < (kWideMin >> shift))
      return extreme(v < 0, out);
    return clamp_to(v * (static_cast<wide_t>(1) << shift), out);
  }
  return apply_overflow(round_shift(v, -shift, out.rounding()), out);
}

}  // namespace detail

std::int64_t quantize_raw(double x, const FixedFormat& f) {
  if (!std::isfinite(x)) throw std::domain_error("non-finite input");
  const int frac = f.frac_bits();
  if (f.overflow() == Overflow::wrap) {
    // Reducing modulo 2^integer_bits keeps floor/rne congruent mod 2^total_bits.
    x = std::fmod(x, std::ldexp(1.0, f.integer_bits()));
  }
  const double scaled = std::ldexp(x, frac);
  if (f.overflow() == Overflow::saturate) {
    if (scaled >= std::ldexp(1.0, 100)) return f.max_raw();
    if (scaled <= -std::ldexp(1.0, 100)) return f.min_raw();
  }
  double r = std::floor(scaled);
  if (f.rounding() == Rounding::round_nearest_even) {
    const double d = scaled - r;
    if (d > 0.5 || (d == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
  }
  const auto v = static_cast<wide_t>(r);
  return f.overflow() == Overflow::saturate ? clamp_to(v, f) : wrap_to(v, f);
}

FixedScalar quantize(double x, const FixedFormat& f) { return {quantize_raw(x, f), f}; }

double to_real(std::int64_t raw, const FixedFormat& f) {
  return std::ldexp(static_cast<double>(raw), -f.frac_bits());
}

double dequantize(const FixedScalar& v) { return to_real(v.raw, v.format); }

std::int64_t cast_raw(std::int64_t raw, const FixedFormat& from, const FixedFormat& to) {
  return detail::requantize(raw, from.frac_bits(), to);
}

FixedScalar cast(const FixedScalar& v, const FixedFormat& to) {
  return {cast_raw(v.raw, v.format, to), to};
}

std::int64_t add_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out) {
  const int frac = std::max(fa.frac_bits(), fb.frac_bits());
  // One operand is shifted by at most 64, so each aligned term fits in 128 bits.
  const wide_t aa = static_cast<wide_t>(static_cast<unsigned __int128>(static_cast<wide_t>(a))
                                        << (frac - fa.frac_bits()));
  const wide_t bb = static_cast<wide_t>(static_cast<unsigned __int128>(static_cast<wide_t>(b))
                                        << (frac - fb.frac_bits()));
  wide_t sum = 0;
  if (__builtin_add_overflow(aa, bb, &sum)) {
    if (out.overflow() == Overflow::saturate) return extreme(aa < 0, out);
    sum = static_cast<wide_t>(static_cast<unsigned __int128>(aa) + static_cast<unsigned __int128>(bb));
  }
  return detail::requantize(sum, frac, out);
}

std::int64_t sub_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out) {
  const int frac = std::max(fa.frac_bits(), fb.frac_bits());
  const wide_t aa = static_cast<wide_t>(static_cast<unsigned __int128>(static_cast<wide_t>(a))
                                        << (frac - fa.frac_bits()));
  const wide_t bb = static_cast<wide_t>(static_cast<unsigned __int128>(static_cast<wide_t>(b))
                                        << (frac - fb.frac_bits()));
  wide_t diff = 0;
  if (__builtin_sub_overflow(aa, bb, &diff)) {
    if (out.overflow() == Overflow::saturate) return extreme(aa < 0, out);
    diff = static_cast<wide_t>(static_cast<unsigned __int128>(aa) - static_cast<unsigned __int128>(bb));
  }
  return detail::requantize(diff, frac, out);
}

std::int64_t mul_raw(std::int64_t a, const FixedFormat& fa, std::int64_t b,
                     const FixedFormat& fb, const FixedFormat& out) {
  const wide_t prod = static_cast<wide_t>(a) * static_cast<wide_t>(b);
  return detail::requantize(prod, fa.frac_bits() + fb.frac_bits(), out);
}

FixedScalar fx_add(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out) {
  return {add_raw(a.raw, a.format, b.raw, b.format, out), out};
}

FixedScalar fx_sub(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out) {
  return {sub_raw(a.raw, a.format, b.raw, b.format, out), out};
}

FixedScalar fx_mul(const FixedScalar& a, const FixedScalar& b, const FixedFormat& out) {
  return {mul_raw(a.raw, a.format, b.raw, b.format, out), out};
}

FixedScalar accumulate(std::span<const FixedScalar> terms, const FixedFormat& acc) {
  std::int64_t sum = 0;
  for (const auto& t : terms) {
    if (t.format.integer_bits() > acc.integer_bits())
      throw std::invalid_argument("accumulator narrower than term format " + t.format.str());
    sum = add_raw(sum, acc, cast_raw(t.raw, t.format, acc), acc, acc);
  }
  return {sum, acc};
}

QTensor::QTensor(std::vector<std::size_t> shape, const FixedFormat& format)
    : shape_(std::move(shape)), format_(format) {
  const auto n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  raw_.assign(n, 0);
  if (!format_.contains(0)) raw_.assign(n, format_.min_raw());
}

QTensor::QTensor(std::vector<std::size_t> shape, std::vector<std::int64_t> raw,
                 const FixedFormat& format)
    : shape_(std::move(shape)), raw_(std::move(raw)), format_(format) {
  const auto n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != raw_.size())
    throw std::invalid_argument("QTensor payload length " + std::to_string(raw_.size()) +
                                " does not match shape volume " + std::to_string(n));
  for (auto v : raw_)
    if (!format_.contains(v))
      throw std::invalid_argument("QTensor payload out of range for " + format_.str());
}

QTensor QTensor::from_real(std::vector<std::size_t> shape, std::span<const double> values,
                           const FixedFormat& format) {
  std::vector<std::int64_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = quantize_raw(values[i], format);
  return QTensor(std::move(shape), std::move(raw), format);
}

std::span<const std::int64_t> QTensor::row(std::size_t r) const {
  const std::size_t c = raw_.size() / std::max<std::size_t>(rows(), 1);
  return std::span<const std::int64_t>(raw_).subspan(r * c, c);
}

std::span<std::int64_t> QTensor::row(std::size_t r) {
  const std::size_t c = raw_.size() / std::max<std::size_t>(rows(), 1);
  return std::span<std::int64_t>(raw_).subspan(r * c, c);
}

std::vector<double> QTensor::to_real() const {
  std::vector<double> out(raw_.size());
  for (std::size_t i = 0; i < raw_.size(); ++i) out[i] = fxformer::to_real(raw_[i], format_);
  return out;
}

}  // namespace fxformer
