// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include "fxformer/error.hpp"
#include "fxformer/model.hpp"
#include "fxformer/rng.hpp"

namespace fxformer {

namespace {

// Benchmark hyperparameters: sequence length, input width, transformer
// blocks, hidden width and output width follow the published model table.
// Head counts, per-head width and the classifier head are local choices.
struct Blueprint {
  const char* name;
  int seq_len;
  int input_dim;
  int blocks;
  int hidden;
  int outputs;
  int heads;
  int d_k;
  int head_units;
  bool layernorm;
  Activation final_activation;
  double output_gain;
  std::uint64_t salt;
};

constexpr Blueprint kEngine{"engine", 50, 1, 3, 16, 2, 2, 4, 8, false, Activation::softmax, 3.0, 0x11};
constexpr Blueprint kBtag{"btag", 15, 6, 3, 64, 3, 2, 8, 16, false, Activation::softmax, 3.0, 0x22};
constexpr Blueprint kGw{"gw", 100, 2, 2, 32, 1, 2, 8, 16, true, Activation::sigmoid, 3.0, 0x33};

std::vector<double> uniform_weights(Rng& rng, std::size_t n, int fan_in, double gain) {
  // Var = gain^2 / fan_in.
  const double a = gain * std::sqrt(3.0 / fan_in);
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-a, a);
  return w;
}

DenseLayer dense(Rng& rng, int in, int units, Activation act, double gain) {
  DenseLayer d;
  d.in = in;
  d.units = units;
  d.activation = act;
  d.weights = uniform_weights(rng, static_cast<std::size_t>(in) * units, in, gain);
  d.bias = uniform_weights(rng, static_cast<std::size_t>(units), 1, 0.05);
  return d;
}

MhaLayer mha(Rng& rng, int d_model, int heads, int d_k) {
  MhaLayer m;
  m.heads = heads;
  m.d_model = d_model;
  m.d_k = d_k;
  const auto proj = static_cast<std::size_t>(d_model) * d_k;
  for (int h = 0; h < heads; ++h) {
    m.w_q.push_back(uniform_weights(rng, proj, d_model, 1.0));
    m.w_k.push_back(uniform_weights(rng, proj, d_model, 1.0));
    m.w_v.push_back(uniform_weights(rng, proj, d_model, 1.0));
  }
  m.w_o = uniform_weights(rng, static_cast<std::size_t>(heads) * d_k * d_model, heads * d_k, 0.5);
  m.b_o = uniform_weights(rng, static_cast<std::size_t>(d_model), 1, 0.05);
  return m;
}

LayerNormLayer layernorm(Rng& rng, int dim) {
  LayerNormLayer n;
  n.dim = dim;
  n.gamma.resize(static_cast<std::size_t>(dim));
  n.beta.resize(static_cast<std::size_t>(dim));
  for (auto& g : n.gamma) g = rng.uniform(0.8, 1.2);
  for (auto& b : n.beta) b = rng.uniform(-0.1, 0.1);
  return n;
}

ModelGraph build(const Blueprint& bp, std::uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ull + bp.salt);
  ModelGraph g;
  g.name = bp.name;
  g.seq_len = bp.seq_len;
  g.input_dim = bp.input_dim;
  auto last = [&] { return static_cast<int>(g.layers.size()) - 1; };

  g.layers.emplace_back(dense(rng, bp.input_dim, bp.hidden, Activation::none, 1.0));
  for (int b = 0; b < bp.blocks; ++b) {
    const int block_in = last();
    g.layers.emplace_back(mha(rng, bp.hidden, bp.heads, bp.d_k));
    g.layers.emplace_back(ResidualAddLayer{block_in});
    if (bp.layernorm) g.layers.emplace_back(layernorm(rng, bp.hidden));
    const int ffn_in = last();
    g.layers.emplace_back(dense(rng, bp.hidden, bp.hidden, Activation::relu, 0.5));
    g.layers.emplace_back(ResidualAddLayer{ffn_in});
    if (bp.layernorm) g.layers.emplace_back(layernorm(rng, bp.hidden));
  }
  g.layers.emplace_back(PoolOverTimeLayer{});
  g.layers.emplace_back(dense(rng, bp.hidden, bp.head_units, Activation::relu, 1.4));
  g.layers.emplace_back(dense(rng, bp.head_units, bp.outputs, bp.final_activation, bp.output_gain));
  validate(g);
  return g;
}

}  // namespace

ExampleModels build_example_models(std::uint64_t seed) {
  return {build(kEngine, seed), build(kBtag, seed), build(kGw, seed)};
}

ModelGraph build_example_model(std::string_view name, std::uint64_t seed) {
  if (name == "engine") return build(kEngine, seed);
  if (name == "btag") return build(kBtag, seed);
  if (name == "gw") return build(kGw, seed);
  throw InputError("unknown example model '" + std::string(name) + "' (expected engine, btag or gw)");
}

}  // namespace fxformer
