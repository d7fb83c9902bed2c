// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "fxformer/error.hpp"
#include "fxformer/stream.hpp"
#include "test_util.hpp"

using namespace fxformer;
using namespace fxformer::testing;

namespace {

QuantConfig random_config(Rng& rng) {
  QuantConfig c = QuantConfig::with_precision(rng.integer(3, 8), rng.integer(4, 18));
  if (rng.uniform() < 0.3) c.softmax = SoftmaxVariant::legacy;
  if (rng.uniform() < 0.3) c.activation_format = c.activation_format.with_rounding(Rounding::round_nearest_even);
  c.lut.exp_size = 1 << rng.integer(4, 11);
  c.lut.reciprocal_size = 1 << rng.integer(4, 11);
  c.lut.inv_sqrt_size = 1 << rng.integer(4, 11);
  return c;
}

}  // namespace

TEST_CASE("streamed layers equal batch kernels bit for bit") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    CAPTURE(t);
    const QuantConfig cfg = random_config(rng);
    const int seq = rng.integer(1, 8);
    const int d = rng.integer(1, 8);
    const QTensor x = QTensor::from_real({static_cast<std::size_t>(seq), static_cast<std::size_t>(d)},
                                         random_vec(rng, static_cast<std::size_t>(seq * d), 4.0),
                                         cfg.activation_format);

    const auto mha = std::get<QMha>(quantize_layer(random_mha(rng, rng.integer(1, 3), d, rng.integer(1, 8)), cfg, seq));
    REQUIRE(mha_q_stream(x, mha, cfg) == mha_q_batch(x, mha, cfg));

    const auto u = SoftmaxUnit::make(cfg, d);
    REQUIRE(softmax_stream(x, *u, cfg) == (cfg.softmax == SoftmaxVariant::legacy ? softmax_legacy(x, *u)
                                                                                 : softmax_restructured(x, *u)));

    const auto ln = std::get<QLayerNorm>(quantize_layer(random_layernorm(rng, d), cfg, seq));
    REQUIRE(layernorm_stream(x, ln, cfg) == layernorm_q(x, ln, cfg));

    const ModelGraph g = random_model(rng);
    const QModel qm = quantize_model(g, cfg);
    const QTensor gx = quantize_input(qm, random_input(rng, g.input_shape().rows, g.input_shape().cols, 2.0));
    OpCounter a, b;
    REQUIRE(stream_forward(qm, gx, &a) == fixed_forward(qm, gx, &b));
    REQUIRE(a.exp_lookups == b.exp_lookups);
    REQUIRE(a.reciprocal_lookups == b.reciprocal_lookups);
    REQUIRE(a.inv_sqrt_lookups == b.inv_sqrt_lookups);
  }
}

TEST_CASE("example models stream bit-exactly") {
  Rng rng(32);
  for (const char* name : {"engine", "btag", "gw"}) {
    CAPTURE(name);
    const ModelGraph g = build_example_model(name);
    const QModel qm = quantize_model(g, QuantConfig{});
    const QTensor x = quantize_input(qm, random_input(rng, g.input_shape().rows, g.input_shape().cols));
    CHECK(stream_forward(qm, x) == fixed_forward(qm, x));
    // First MHA block on its own.
    const auto all = fixed_forward_all(qm, x);
    CHECK(mha_q_stream(all[0], std::get<QMha>(qm.layers[1]), qm.config) == all[1]);
  }
}

TEST_CASE("row count errors") {
  const QuantConfig cfg;
  Rng rng(33);
  const QLayer mha = quantize_layer(random_mha(rng, 1, 3, 2), cfg, 4);
  const std::vector<std::int64_t> row(3, 0);
  {
    LayerStreamer s(mha, cfg, {4, 3});
    for (int i = 0; i < 4; ++i) s.push(row);
    CHECK_THROWS_WITH_AS(s.push(row), "sequence overflow", StreamError);
  }
  {
    LayerStreamer s(mha, cfg, {4, 3});
    for (int i = 0; i < 3; ++i) s.push(row);
    CHECK_THROWS_WITH_AS(s.finish(), "truncated sequence", StreamError);
  }
  {
    LayerStreamer s(mha, cfg, {4, 3});
    CHECK_THROWS_AS(s.push(std::vector<std::int64_t>(2, 0)), StreamError);
    CHECK_THROWS_AS(s.push_skip(row), StreamError);
  }
  {
    LayerStreamer s(mha, cfg, {4, 3});
    for (int i = 0; i < 4; ++i) s.push(row);
    s.finish();
    std::size_t n = 0;
    while (s.pop()) ++n;
    CHECK(n == 4);
  }
}

TEST_CASE("stage descriptions") {
  const QuantConfig cfg;
  Rng rng(34);
  CHECK(describe_layer(quantize_layer(random_mha(rng, 2, 4, 2), cfg, 5), cfg, {5, 4}, 0).size() == 4);
  CHECK(describe_layer(quantize_layer(random_layernorm(rng, 4), cfg, 5), cfg, {5, 4}, 0).size() == 5);
  CHECK(describe_layer(quantize_layer(random_dense(rng, 4, 3, Activation::none), cfg, 5), cfg, {5, 4}, 0).size() == 1);
  CHECK(describe_layer(quantize_layer(random_dense(rng, 4, 3, Activation::softmax), cfg, 5), cfg, {5, 4}, 0).size() == 4);
}
