// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fxformer {

/// Dense row-major matrix of doubles; rows are time steps.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Activation : std::uint8_t { none, relu, sigmoid, softmax };
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

/// y = x W + b per time step; W is [in x units] row-major.
struct DenseLayer {
  int in = 0;
  int units = 0;
  Activation activation = Activation::none;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Multi-head self-attention with separate per-head projections.
/// Row convention: Q_h = X W_q[h] with W_q[h] of shape [d_model x d_k].
/// Only the output projection carries a bias.
struct MhaLayer {
  int heads = 1;
  int d_model = 0;
  int d_k = 0;
  std::vector<std::vector<double>> w_q;
  std::vector<std::vector<double>> w_k;
  std::vector<std::vector<double>> w_v;
  std::vector<double> w_o;  // [(heads * d_k) x d_model]
  std::vector<double> b_o;  // [d_model]
};

/// Normalizes each time step across features, then applies gamma/beta.
struct LayerNormLayer {
  int dim = 0;
  std::vector<double> gamma;
  std::vector<double> beta;
};

/// Adds the output of an earlier layer; source == -1 names the graph input.
struct ResidualAddLayer {
  int source = -1;
};

/// Mean over the time axis: [seq x d] -> [1 x d].
struct PoolOverTimeLayer {};

using LayerSpec =
    std::variant<DenseLayer, MhaLayer, LayerNormLayer, ResidualAddLayer, PoolOverTimeLayer>;

std::string_view layer_kind(const LayerSpec& layer);

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct ModelGraph {
  std::string name;
  int seq_len = 1;
  int input_dim = 1;
  std::vector<LayerSpec> layers;

  Shape input_shape() const {
    return {static_cast<std::size_t>(seq_len), static_cast<std::size_t>(input_dim)};
  }
};

/// Output shape of every layer. Throws InputError on any broken invariant,
/// naming the offending layer with expected and actual shapes.
std::vector<Shape> validate(const ModelGraph& g);
Shape output_shape(const ModelGraph& g);

std::size_t count_parameters(const LayerSpec& layer);
std::size_t count_parameters(const ModelGraph& g);

/// Loads and validates the JSON model format. Weight arrays are either inline
/// number arrays or {"weights_file", "offset", "len"} references into a
/// sidecar of little-endian float64 values (offset/len count elements,
/// paths relative to the model file).
ModelGraph load_model(const std::filesystem::path& path);
ModelGraph parse_model(std::string_view json_text,
                       const std::filesystem::path& base_dir = std::filesystem::path("."));
/// Canonical JSON: fixed key order, inline weights, shortest round-trip doubles.
std::string dump_model(const ModelGraph& g);
void save_model(const ModelGraph& g, const std::filesystem::path& path);

/// Double-precision reference forward pass. Returns the final layer output.
Matrix float_forward(const ModelGraph& g, const Matrix& x);
/// Every layer's output, in layer order.
std::vector<Matrix> float_forward_all(const ModelGraph& g, const Matrix& x);

/// Row-wise reference kernels, shared by the float forward pass and tests.
namespace reference {
void softmax_inplace(std::span<double> z);
double sigmoid(double x);
/// Zero-variance rows normalize to zero.
void layernorm_row(std::span<const double> x, std::span<const double> gamma,
                   std::span<const double> beta, std::span<double> out);
/// Per-head attention probabilities [seq x seq] of one MHA layer.
Matrix attention_probabilities(const MhaLayer& layer, const Matrix& x, int head);
Matrix apply_layer(const LayerSpec& layer, const Matrix& x, std::span<const Matrix> earlier,
                   const Matrix& graph_input);
}  // namespace reference

struct ExampleModels {
  ModelGraph engine;
  ModelGraph btag;
  ModelGraph gw;
};

/// The three benchmark configurations with seeded synthetic weights.
ExampleModels build_example_models(std::uint64_t seed = 2024);
/// "engine", "btag" or "gw"; throws InputError otherwise.
ModelGraph build_example_model(std::string_view name, std::uint64_t seed = 2024);

}  // namespace fxformer
