// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fxformer/simd.hpp"

namespace fxformer::simd {

namespace {

Isa detect() {
  if (const char* env = std::getenv("FXFORMER_ISA"); env && std::string(env) == "scalar")
    return Isa::scalar;
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

std::atomic<DotFn>& active_fn() {
  static std::atomic<DotFn> fn{nullptr};
  return fn;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

DotFn fn_for(Isa isa) {
#ifdef FXFORMER_HAVE_AVX2_KERNELS
  if (isa == Isa::avx2) return &dot_avx2;
#endif
  (void)isa;
  return &dot_scalar;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#ifdef FXFORMER_HAVE_AVX2_KERNELS
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument("ISA '" + std::string(isa_name(isa)) + "' not supported on this CPU");
  active().store(isa, std::memory_order_relaxed);
  active_fn().store(fn_for(isa), std::memory_order_relaxed);
}

std::int64_t dot(std::span<const std::int64_t> lhs, std::span<const std::int64_t> rhs,
                 const DotFormats& f) {
  DotFn fn = active_fn().load(std::memory_order_relaxed);
  if (fn == nullptr) {
    fn = fn_for(active_isa());
    active_fn().store(fn, std::memory_order_relaxed);
  }
  return fn(lhs, rhs, f);
}

}  // namespace fxformer::simd
