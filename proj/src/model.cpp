// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fxformer/error.hpp"

namespace fxformer {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string shape_str(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

std::string layer_name(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + std::string(layer_kind(layer)) + ")";
}

void expect_len(std::size_t index, const LayerSpec& layer, std::string_view what,
                std::size_t actual, std::size_t expected) {
  if (actual != expected)
    throw InputError("shape mismatch in " + layer_name(index, layer) + ": " + std::string(what) +
                     " has " + std::to_string(actual) + " elements, expected " +
                     std::to_string(expected));
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw std::invalid_argument("Matrix: data length does not match shape");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "none";
}

Activation parse_activation(std::string_view s) {
  if (s == "none" || s == "linear") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw InputError("unknown activation '" + std::string(s) + "'");
}

std::string_view layer_kind(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer&) { return std::string_view("dense"); },
                        [](const MhaLayer&) { return std::string_view("mha"); },
                        [](const LayerNormLayer&) { return std::string_view("layernorm"); },
                        [](const ResidualAddLayer&) { return std::string_view("residual_add"); },
                        [](const PoolOverTimeLayer&) { return std::string_view("pool_over_time"); },
                    },
                    layer);
}

std::vector<Shape> validate(const ModelGraph& g) {
  if (g.seq_len < 1) throw InputError("seq_len must be >= 1");
  if (g.input_dim < 1) throw InputError("input_dim must be >= 1");
  if (g.layers.empty()) throw InputError("empty model");

  std::vector<Shape> shapes;
  shapes.reserve(g.layers.size());
  Shape cur = g.input_shape();
  bool pooled = false;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& layer = g.layers[i];
    Shape out = std::visit(
        overloaded{
            [&](const DenseLayer& d) {
              if (d.units < 1) throw InputError(layer_name(i, layer) + ": units must be >= 1");
              if (d.in != static_cast<int>(cur.cols))
                throw InputError("shape mismatch in " + layer_name(i, layer) + ": expected input " +
                                 shape_str(cur) + ", layer declares in=" + std::to_string(d.in));
              expect_len(i, layer, "W", d.weights.size(), static_cast<std::size_t>(d.in) * d.units);
              expect_len(i, layer, "b", d.bias.size(), static_cast<std::size_t>(d.units));
              return Shape{cur.rows, static_cast<std::size_t>(d.units)};
            },
            [&](const MhaLayer& m) {
              if (m.heads < 1 || m.d_k < 1 || m.d_model < 1)
                throw InputError(layer_name(i, layer) + ": heads, d_model and d_k must be >= 1");
              if (pooled) throw InputError(layer_name(i, layer) + ": attention after pooling");
              if (m.d_model != static_cast<int>(cur.cols))
                throw InputError("shape mismatch in " + layer_name(i, layer) + ": expected input " +
                                 shape_str(cur) + ", layer declares d_model=" +
                                 std::to_string(m.d_model));
              const auto h = static_cast<std::size_t>(m.heads);
              const auto proj = static_cast<std::size_t>(m.d_model) * m.d_k;
              expect_len(i, layer, "W_q heads", m.w_q.size(), h);
              expect_len(i, layer, "W_k heads", m.w_k.size(), h);
              expect_len(i, layer, "W_v heads", m.w_v.size(), h);
              for (std::size_t k = 0; k < h; ++k) {
                expect_len(i, layer, "W_q[" + std::to_string(k) + "]", m.w_q[k].size(), proj);
                expect_len(i, layer, "W_k[" + std::to_string(k) + "]", m.w_k[k].size(), proj);
                expect_len(i, layer, "W_v[" + std::to_string(k) + "]", m.w_v[k].size(), proj);
              }
              expect_len(i, layer, "W_o", m.w_o.size(), h * m.d_k * m.d_model);
              expect_len(i, layer, "b_o", m.b_o.size(), static_cast<std::size_t>(m.d_model));
              return cur;
            },
            [&](const LayerNormLayer& n) {
              if (n.dim != static_cast<int>(cur.cols))
                throw InputError("shape mismatch in " + layer_name(i, layer) + ": expected input " +
                                 shape_str(cur) + ", layer declares dim=" + std::to_string(n.dim));
              expect_len(i, layer, "gamma", n.gamma.size(), cur.cols);
              expect_len(i, layer, "beta", n.beta.size(), cur.cols);
              return cur;
            },
            [&](const ResidualAddLayer& r) {
              if (r.source < -1 || r.source >= static_cast<int>(i))
                throw InputError(layer_name(i, layer) + ": residual source " +
                                 std::to_string(r.source) + " does not precede the layer");
              const Shape src = r.source < 0 ? g.input_shape() : shapes[r.source];
              if (src != cur)
                throw InputError("shape mismatch in " + layer_name(i, layer) + ": source " +
                                 std::to_string(r.source) + " has shape " + shape_str(src) +
                                 ", expected " + shape_str(cur));
              return cur;
            },
            [&](const PoolOverTimeLayer&) {
              if (pooled) throw InputError(layer_name(i, layer) + ": sequence already pooled");
              pooled = true;
              return Shape{1, cur.cols};
            },
        },
        layer);
    shapes.push_back(out);
    cur = out;
  }
  return shapes;
}

Shape output_shape(const ModelGraph& g) { return validate(g).back(); }

std::size_t count_parameters(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) { return d.weights.size() + d.bias.size(); },
                        [](const MhaLayer& m) {
                          std::size_t n = m.w_o.size() + m.b_o.size();
                          for (const auto& w : m.w_q) n += w.size();
                          for (const auto& w : m.w_k) n += w.size();
                          for (const auto& w : m.w_v) n += w.size();
                          return n;
                        },
                        [](const LayerNormLayer& n) { return n.gamma.size() + n.beta.size(); },
                        [](const ResidualAddLayer&) { return std::size_t{0}; },
                        [](const PoolOverTimeLayer&) { return std::size_t{0}; },
                    },
                    layer);
}

std::size_t count_parameters(const ModelGraph& g) {
  std::size_t n = 0;
  for (const auto& l : g.layers) n += count_parameters(l);
  return n;
}

namespace reference {

void softmax_inplace(std::span<double> z) {
  if (z.empty()) return;
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : z) v /= s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void layernorm_row(std::span<const double> x, std::span<const double> gamma,
                   std::span<const double> beta, std::span<double> out) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean) * inv * gamma[j] + beta[j];
}

namespace {

// out[r][c] = sum_i x[r][i] * w[i][c]
Matrix matmul(const Matrix& x, std::span<const double> w, std::size_t out_cols) {
  Matrix out(x.rows, out_cols);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t i = 0; i < x.cols; ++i) {
      const double xv = x(r, i);
      for (std::size_t c = 0; c < out_cols; ++c) out(r, c) += xv * w[i * out_cols + c];
    }
  return out;
}

Matrix head_output(const MhaLayer& m, const Matrix& x, int head) {
  const auto dk = static_cast<std::size_t>(m.d_k);
  const Matrix p = attention_probabilities(m, x, head);
  const Matrix v = matmul(x, m.w_v[head], dk);
  Matrix o(x.rows, dk);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t t = 0; t < x.rows; ++t)
      for (std::size_t c = 0; c < dk; ++c) o(r, c) += p(r, t) * v(t, c);
  return o;
}

}  // namespace

Matrix attention_probabilities(const MhaLayer& m, const Matrix& x, int head) {
  const auto dk = static_cast<std::size_t>(m.d_k);
  const Matrix q = matmul(x, m.w_q[head], dk);
  const Matrix k = matmul(x, m.w_k[head], dk);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.d_k));
  Matrix p(x.rows, x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t t = 0; t < x.rows; ++t) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q(r, c) * k(t, c);
      p(r, t) = s * scale;
    }
    softmax_inplace(p.row(r));
  }
  return p;
}

Matrix apply_layer(const LayerSpec& layer, const Matrix& x, std::span<const Matrix> earlier,
                   const Matrix& graph_input) {
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) {
            Matrix y = matmul(x, d.weights, static_cast<std::size_t>(d.units));
            for (std::size_t r = 0; r < y.rows; ++r) {
              auto row = y.row(r);
              for (std::size_t c = 0; c < y.cols; ++c) row[c] += d.bias[c];
              switch (d.activation) {
                case Activation::none: break;
                case Activation::relu:
                  for (auto& v : row) v = std::max(v, 0.0);
                  break;
                case Activation::sigmoid:
                  for (auto& v : row) v = sigmoid(v);
                  break;
                case Activation::softmax: softmax_inplace(row); break;
              }
            }
            return y;
          },
          [&](const MhaLayer& m) {
            const auto dk = static_cast<std::size_t>(m.d_k);
            Matrix concat(x.rows, dk * m.heads);
            for (int h = 0; h < m.heads; ++h) {
              const Matrix o = head_output(m, x, h);
              for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < dk; ++c) concat(r, h * dk + c) = o(r, c);
            }
            Matrix y = matmul(concat, m.w_o, static_cast<std::size_t>(m.d_model));
            for (std::size_t r = 0; r < y.rows; ++r)
              for (std::size_t c = 0; c < y.cols; ++c) y(r, c) += m.b_o[c];
            return y;
          },
          [&](const LayerNormLayer& n) {
            Matrix y(x.rows, x.cols);
            for (std::size_t r = 0; r < x.rows; ++r) layernorm_row(x.row(r), n.gamma, n.beta, y.row(r));
            return y;
          },
          [&](const ResidualAddLayer& r) {
            const Matrix& src = r.source < 0 ? graph_input : earlier[r.source];
            Matrix y = x;
            for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += src.data[i];
            return y;
          },
          [&](const PoolOverTimeLayer&) {
            Matrix y(1, x.cols);
            for (std::size_t r = 0; r < x.rows; ++r)
              for (std::size_t c = 0; c < x.cols; ++c) y(0, c) += x(r, c);
            for (auto& v : y.data) v /= static_cast<double>(x.rows);
            return y;
          },
      },
      layer);
}

}  // namespace reference

std::vector<Matrix> float_forward_all(const ModelGraph& g, const Matrix& x) {
  validate(g);
  if (x.rows != static_cast<std::size_t>(g.seq_len) || x.cols != static_cast<std::size_t>(g.input_dim))
    throw InputError("input shape [" + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                     "] does not match model [" + std::to_string(g.seq_len) + "x" +
                     std::to_string(g.input_dim) + "]");
  std::vector<Matrix> outs;
  outs.reserve(g.layers.size());
  const Matrix* cur = &x;
  for (const auto& layer : g.layers) {
    outs.push_back(reference::apply_layer(layer, *cur, outs, x));
    cur = &outs.back();
  }
  return outs;
}

Matrix float_forward(const ModelGraph& g, const Matrix& x) {
  return std::move(float_forward_all(g, x).back());
}

}  // namespace fxformer
