// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "fxformer/lut.hpp"

using namespace fxformer;

namespace {

LutSpec spec(LutKind kind, double lo, double hi, int size = 1024,
             FixedFormat entry = FixedFormat(18, 2, false)) {
  LutSpec s;
  s.kind = kind;
  s.input_lo = lo;
  s.input_hi = hi;
  s.table_size = size;
  s.entry_format = entry;
  return s;
}

double max_error_on_grid(const LutTable& t, int points) {
  const auto& s = t.spec();
  double worst = 0.0;
  for (int i = 0; i <= points; ++i) {
    const double x = s.input_lo + (s.input_hi - s.input_lo) * i / points;
    const double got = dequantize(FixedScalar{t.entries()[t.index_of(x)], s.entry_format});
    worst = std::max(worst, std::abs(got - lut_function(s.kind, x)));
  }
  return worst;
}

}  // namespace

TEST_CASE("entries are sampled at cell midpoints") {
  const LutTable t(spec(LutKind::exp, -8.0, 0.0));
  const double cell = 8.0 / 1024;
  CHECK(t.midpoint(0) == -8.0 + cell / 2);
  for (std::size_t i : {std::size_t{0}, std::size_t{17}, std::size_t{1023}}) {
    const auto f = t.spec().entry_format;
    CHECK(t.entries()[i] == quantize_raw(std::exp(-8.0 + (i + 0.5) * cell), f));
  }
  // Entry nearest 0 is e^(-cell/2) within one entry step.
  const double last = dequantize(FixedScalar{t.entries().back(), t.spec().entry_format});
  CHECK(std::abs(last - std::exp(-cell / 2)) <= t.spec().entry_format.step());
  // First entry against the real exponential.
  const double first = dequantize(FixedScalar{t.entries()[t.index_of(-8.0 + 1e-9)], t.spec().entry_format});
  CHECK(std::abs(first - std::exp(-8.0 + cell / 2)) <= t.spec().entry_format.step());
}

TEST_CASE("lookup examples") {
  const LutTable r(spec(LutKind::reciprocal, 0.5, 64.5));
  const double cell = r.spec().cell_width();
  const double at1 = dequantize(FixedScalar{r.entries()[r.index_of(1.0)], r.spec().entry_format});
  CHECK(std::abs(at1 - 1.0) <= cell + r.spec().entry_format.step());

  const LutTable s(spec(LutKind::inv_sqrt, 1.0 / 1024, 16.0));
  const double at4 = dequantize(FixedScalar{s.entries()[s.index_of(4.0)], s.spec().entry_format});
  // |d/dx x^-1/2| at 4 is 1/16.
  CHECK(std::abs(at4 - 0.5) <= s.spec().cell_width() / 16 + s.spec().entry_format.step());

  const LutTable e(spec(LutKind::exp, -8.0, 0.0));
  const FixedFormat in(16, 6);
  const auto mid = quantize(e.midpoint(100), in);
  CHECK(e.index_of(dequantize(mid)) == 100);
  CHECK(e.lookup(mid).raw == e.entries()[100]);
}

TEST_CASE("out-of-range inputs clamp and count") {
  const LutTable e(spec(LutKind::exp, -8.0, 0.0));
  const FixedFormat in(16, 6);
  CHECK(e.saturation_count() == 0);
  CHECK(e.lookup(quantize(-20.0, in)).raw == e.entries().front());
  CHECK(e.lookup(quantize(3.0, in)).raw == e.entries().back());
  CHECK(e.saturation_count() == 2);
  CHECK(e.lookup(quantize(-1.0, in)).raw == e.entries()[e.index_of(-1.0)]);
  CHECK(e.saturation_count() == 2);
  e.reset_saturation_count();
  CHECK(e.saturation_count() == 0);
  // The upper edge itself belongs to the last cell.
  CHECK(e.index_of(0.0) == 1023);
}

TEST_CASE("approximation bound holds on a dense grid") {
  for (const auto& s : {spec(LutKind::exp, -8.0, 0.0), spec(LutKind::exp, -8.0, 8.0, 1024, FixedFormat(30, 13)),
                        spec(LutKind::reciprocal, 0.5, 50.5), spec(LutKind::reciprocal, 1.0, 81.0, 256),
                        spec(LutKind::inv_sqrt, 1.0 / 1024, 16.0, 1024, FixedFormat(26, 10)),
                        spec(LutKind::exp, -4.0, 0.0, 64, FixedFormat(12, 2))}) {
    const LutTable t(s);
    CAPTURE(to_string(s.kind));
    CAPTURE(s.table_size);
    CHECK(max_error_on_grid(t, 100000) <= t.error_bound());
  }
}

TEST_CASE("entries are monotone per kind") {
  const LutTable e(spec(LutKind::exp, -8.0, 0.0));
  const LutTable r(spec(LutKind::reciprocal, 0.5, 20.5));
  const LutTable s(spec(LutKind::inv_sqrt, 0.01, 16.0));
  for (std::size_t i = 1; i < 1024; ++i) {
    REQUIRE(e.entries()[i - 1] <= e.entries()[i]);
    REQUIRE(r.entries()[i - 1] >= r.entries()[i]);
    REQUIRE(s.entries()[i - 1] >= s.entries()[i]);
  }
}

TEST_CASE("doubling the table size does not increase the error") {
  for (LutKind k : {LutKind::exp, LutKind::reciprocal, LutKind::inv_sqrt}) {
    const double lo = k == LutKind::exp ? -8.0 : 0.5;
    const double hi = k == LutKind::exp ? 0.0 : 16.5;
    double prev = INFINITY;
    for (int size = 16; size <= 4096; size *= 2) {
      const double err = max_error_on_grid(LutTable(spec(k, lo, hi, size, FixedFormat(40, 4))), 20000);
      CAPTURE(size);
      CHECK(err <= prev);
      prev = err;
    }
  }
}

TEST_CASE("invalid domains are rejected") {
  CHECK_THROWS_WITH_AS(LutTable(spec(LutKind::exp, 0.0, 0.0)), doctest::Contains("invalid LUT domain"),
                       std::invalid_argument);
  CHECK_THROWS_AS(LutTable(spec(LutKind::reciprocal, 0.0, 4.0)), std::invalid_argument);
  CHECK_THROWS_AS(LutTable(spec(LutKind::inv_sqrt, -1.0, 4.0)), std::invalid_argument);
  CHECK_THROWS_AS(LutTable(spec(LutKind::exp, -8.0, 0.0, 1000)), std::invalid_argument);
  CHECK_THROWS_AS(LutTable(spec(LutKind::exp, -8.0, 0.0, 1)), std::invalid_argument);
  CHECK_THROWS_AS(LutTable(spec(LutKind::exp, -8.0, NAN)), std::invalid_argument);
  CHECK(parse_lut_kind("inv_sqrt") == LutKind::inv_sqrt);
  CHECK_THROWS_AS(parse_lut_kind("log"), std::invalid_argument);
}

TEST_CASE("default exp table sampling error is at most 2^-8") {
  // Fine entries isolate the sampling error: slope <= 1 times half a cell.
  const auto f = FixedFormat(31, 1, false);
  const LutTable e(spec(LutKind::exp, -8.0, 0.0, 1024, f));
  CHECK(max_error_on_grid(e, 200000) <= std::ldexp(1.0, -8) + f.step());
}
