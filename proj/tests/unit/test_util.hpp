// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "fxformer/model.hpp"
#include "fxformer/rng.hpp"

namespace fxformer::testing {

inline std::filesystem::path source_dir() { return FXFORMER_SOURCE_DIR; }

inline std::vector<double> random_vec(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline DenseLayer random_dense(Rng& rng, int in, int units, Activation act) {
  DenseLayer d;
  d.in = in;
  d.units = units;
  d.activation = act;
  d.weights = random_vec(rng, static_cast<std::size_t>(in * units), 1.0 / std::sqrt(in));
  d.bias = random_vec(rng, static_cast<std::size_t>(units), 0.1);
  return d;
}

inline MhaLayer random_mha(Rng& rng, int heads, int d_model, int d_k) {
  MhaLayer m;
  m.heads = heads;
  m.d_model = d_model;
  m.d_k = d_k;
  const double s = 1.0 / std::sqrt(d_model);
  for (int h = 0; h < heads; ++h) {
    m.w_q.push_back(random_vec(rng, static_cast<std::size_t>(d_model * d_k), s));
    m.w_k.push_back(random_vec(rng, static_cast<std::size_t>(d_model * d_k), s));
    m.w_v.push_back(random_vec(rng, static_cast<std::size_t>(d_model * d_k), s));
  }
  m.w_o = random_vec(rng, static_cast<std::size_t>(heads * d_k * d_model), 1.0 / std::sqrt(heads * d_k));
  m.b_o = random_vec(rng, static_cast<std::size_t>(d_model), 0.1);
  return m;
}

inline LayerNormLayer random_layernorm(Rng& rng, int d) {
  LayerNormLayer n;
  n.dim = d;
  n.gamma = random_vec(rng, static_cast<std::size_t>(d), 1.0);
  for (auto& g : n.gamma) g += 1.0;
  n.beta = random_vec(rng, static_cast<std::size_t>(d), 0.2);
  return n;
}

/// Small transformer-like graph with shapes <= 8x8 and a random layer mix.
inline ModelGraph random_model(Rng& rng) {
  ModelGraph g;
  g.name = "random";
  g.seq_len = rng.integer(1, 8);
  g.input_dim = rng.integer(1, 8);
  const int d = rng.integer(1, 8);
  g.layers.emplace_back(random_dense(rng, g.input_dim, d, Activation::none));
  const int blocks = rng.integer(1, 2);
  for (int b = 0; b < blocks; ++b) {
    const int skip = static_cast<int>(g.layers.size()) - 1;
    const int heads = rng.integer(1, 3);
    g.layers.emplace_back(random_mha(rng, heads, d, rng.integer(1, 4)));
    g.layers.emplace_back(ResidualAddLayer{skip});
    if (rng.uniform() < 0.5) g.layers.emplace_back(random_layernorm(rng, d));
    const int skip2 = static_cast<int>(g.layers.size()) - 1;
    g.layers.emplace_back(random_dense(rng, d, d, Activation::relu));
    g.layers.emplace_back(ResidualAddLayer{skip2});
  }
  if (rng.uniform() < 0.5) g.layers.emplace_back(PoolOverTimeLayer{});
  const double r = rng.uniform();
  if (r < 0.33) g.layers.emplace_back(random_dense(rng, d, 1, Activation::sigmoid));
  else if (r < 0.66) g.layers.emplace_back(random_dense(rng, d, rng.integer(2, 5), Activation::softmax));
  else g.layers.emplace_back(random_dense(rng, d, rng.integer(1, 4), Activation::relu));
  return g;
}

inline Matrix random_input(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix x(rows, cols);
  for (auto& v : x.data) v = rng.uniform(-scale, scale);
  return x;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fxformer::testing
