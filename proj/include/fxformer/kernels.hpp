// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fxformer/fixed.hpp"
#include "fxformer/lut.hpp"
#include "fxformer/model.hpp"

namespace fxformer {

enum class SoftmaxVariant : std::uint8_t { restructured, legacy };
std::string_view to_string(SoftmaxVariant v);
SoftmaxVariant parse_softmax_variant(std::string_view s);

/// Table geometry for every lookup site. The reciprocal tables span
/// [reciprocal_lo, k] for a softmax of width k; the inverse-sqrt table spans
/// [variance step, inv_sqrt_hi].
struct LutSettings {
  int exp_size = 1024;
  double exp_lo = -8.0;
  double exp_hi = 0.0;
  int reciprocal_size = 1024;
  double reciprocal_lo = 0.5;
  int inv_sqrt_size = 1024;
  double inv_sqrt_hi = 16.0;
  // Legacy softmax tables see both signs of z_j - z_i.
  double legacy_exp_lo = -8.0;
  double legacy_exp_hi = 8.0;
  // Every legacy sum contains exp(0) = 1, so the table starts at 1.
  double legacy_reciprocal_lo = 1.0;
  double legacy_reciprocal_scale = 8.0;
};

struct QuantConfig {
  FixedFormat weight_format{16, 6};
  FixedFormat activation_format{16, 6};
  FixedFormat accumulator_format{20, 10};
  SoftmaxVariant softmax = SoftmaxVariant::restructured;
  LutSettings lut;

  /// Weights and activations fixed<int+frac, int>, accumulator
  /// fixed<10+frac, 10>.
  static QuantConfig with_precision(int integer_bits, int frac_bits);
  /// Throws std::invalid_argument for unusable format combinations.
  void validate() const;
};

struct OpCounter {
  std::uint64_t exp_lookups = 0;
  std::uint64_t reciprocal_lookups = 0;
  std::uint64_t inv_sqrt_lookups = 0;
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;

  void reset() { *this = OpCounter{}; }
};

/// Tables and formats for one softmax width k.
struct SoftmaxUnit {
  SoftmaxVariant variant = SoftmaxVariant::restructured;
  int width = 0;
  FixedFormat act;
  FixedFormat acc;
  LutTable exp;
  LutTable reciprocal;

  /// Output error attributable to one table lookup. Restructured: the larger
  /// error_bound() of the two tables. Legacy: exp relative cell error, the
  /// reciprocal bound, or the clamp error 1/hi, whichever is largest.
  double lut_error_bound() const;

  static std::shared_ptr<const SoftmaxUnit> make(const QuantConfig& cfg, int k);
};

/// Layer-norm table over [one accumulator step, inv_sqrt_hi].
LutSpec inv_sqrt_spec(const QuantConfig& cfg);

struct QDense {
  int in = 0;
  int units = 0;
  Activation activation = Activation::none;
  std::vector<std::int64_t> weights_t;  // [units x in], transposed
  std::vector<std::int64_t> bias;
  std::shared_ptr<const SoftmaxUnit> softmax;  // width `units`, or 2 for sigmoid
};

struct QMha {
  int heads = 1;
  int d_model = 0;
  int d_k = 0;
  int seq_len = 0;
  std::vector<std::vector<std::int64_t>> wq_t, wk_t, wv_t;  // per head [d_k x d_model]
  std::vector<std::int64_t> wo_t;                           // [d_model x heads*d_k]
  std::vector<std::int64_t> bo;
  std::int64_t scale = 0;  // 1/sqrt(d_k) in the weight format
  std::shared_ptr<const SoftmaxUnit> softmax;  // width seq_len
};

struct QLayerNorm {
  int dim = 0;
  std::vector<std::int64_t> gamma;
  std::vector<std::int64_t> beta;
  std::int64_t inv_dim = 0;  // 1/dim in the weight format
  std::int64_t eps_var = 1;  // one step of the variance (accumulator) format
  std::shared_ptr<const LutTable> inv_sqrt;
};

struct QResidual {
  int source = -1;
};

struct QPool {
  int seq_len = 0;
  std::int64_t inv_seq = 0;  // 1/seq_len in the weight format
};

using QLayer = std::variant<QDense, QMha, QLayerNorm, QResidual, QPool>;

struct LayerQuantReport {
  std::size_t index = 0;
  std::string kind;
  std::size_t parameters = 0;
  double max_abs_error = 0.0;
  std::size_t saturated = 0;
};

/// A model graph with every parameter and constant pre-quantized.
struct QModel {
  std::string name;
  int seq_len = 0;
  int input_dim = 0;
  QuantConfig config;
  std::vector<QLayer> layers;
  std::vector<Shape> shapes;
  std::vector<LayerQuantReport> report;

  Shape input_shape() const {
    return {static_cast<std::size_t>(seq_len), static_cast<std::size_t>(input_dim)};
  }
};

QModel quantize_model(const ModelGraph& g, const QuantConfig& cfg);
/// Quantizes one layer; `seq_len` sizes attention and pooling constants.
QLayer quantize_layer(const LayerSpec& layer, const QuantConfig& cfg, int seq_len);

// ---- row primitives shared by batch kernels, streamers and the simulator ----

namespace rowops {

using Row = std::vector<std::int64_t>;

/// Linear part of a dense layer for one time step, result in activation format.
Row dense_linear(std::span<const std::int64_t> x, const QDense& d, const QuantConfig& cfg,
                 OpCounter* ops);
void relu_inplace(std::span<std::int64_t> y);

// Softmax in three phases. Restructured: (1) e = exp(z - max z),
// (2) r = 1 / sum(e), (3) out = e * r. Legacy: (1) all k^2 terms
// exp(z_j - z_i), (2) out_i = 1 / sum_j, (3) pass-through.
Row softmax_phase1(std::span<const std::int64_t> z, const SoftmaxUnit& u, OpCounter* ops);
Row softmax_phase2(std::span<const std::int64_t> a, const SoftmaxUnit& u, OpCounter* ops);
Row softmax_phase3(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                   const SoftmaxUnit& u, OpCounter* ops);
Row softmax_row(std::span<const std::int64_t> z, const SoftmaxUnit& u, OpCounter* ops);

// Sigmoid is a two-way softmax over (y, 0) per element, in the same phases.
Row sigmoid_phase1(std::span<const std::int64_t> y, const SoftmaxUnit& u, OpCounter* ops);
Row sigmoid_phase2(std::span<const std::int64_t> a, const SoftmaxUnit& u, OpCounter* ops);
Row sigmoid_phase3(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                   const SoftmaxUnit& u, OpCounter* ops);
Row sigmoid_row(std::span<const std::int64_t> y, const SoftmaxUnit& u, OpCounter* ops);

// LayerNorm stages. Means, deviations and variance live in the accumulator format.
std::int64_t ln_mean(std::span<const std::int64_t> x, const QLayerNorm& n, const QuantConfig& cfg,
                     OpCounter* ops);
Row ln_deviation(std::span<const std::int64_t> x, std::int64_t mean, const QuantConfig& cfg,
                 OpCounter* ops);
std::int64_t ln_variance(std::span<const std::int64_t> dm, const QLayerNorm& n,
                         const QuantConfig& cfg, OpCounter* ops);
Row ln_normalize(std::span<const std::int64_t> dm, std::int64_t var, const QLayerNorm& n,
                 const QuantConfig& cfg, OpCounter* ops);
Row ln_affine(std::span<const std::int64_t> norm, const QLayerNorm& n, const QuantConfig& cfg,
              OpCounter* ops);

/// Running time-axis sum for mean pooling, kept in the accumulator format.
void pool_accumulate(Row& sum, std::span<const std::int64_t> x, const QuantConfig& cfg,
                     OpCounter* ops);
Row pool_finish(std::span<const std::int64_t> sum, const QPool& p, const QuantConfig& cfg,
                OpCounter* ops);

Row residual(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
             const QuantConfig& cfg, OpCounter* ops);

// MHA pieces. Heads are concatenated along the row.
/// Per-head projections of one input row: returns q (heads*d_k) and fills k, v.
Row mha_project(std::span<const std::int64_t> x, const QMha& m, const QuantConfig& cfg, Row& k,
                Row& v, OpCounter* ops);
/// Attention probabilities for one query row against all keys.
/// `keys` is [seq x heads*d_k]; result is [heads x seq].
Row mha_scores(std::span<const std::int64_t> q, std::span<const std::int64_t> keys, const QMha& m,
               const QuantConfig& cfg, OpCounter* ops);
/// `values_t` is per head [d_k x seq] (columns of V); result is heads*d_k.
Row mha_weighted(std::span<const std::int64_t> probs, std::span<const std::int64_t> values_t,
                 const QMha& m, const QuantConfig& cfg, OpCounter* ops);
Row mha_output(std::span<const std::int64_t> o, const QMha& m, const QuantConfig& cfg,
               OpCounter* ops);
/// Rearranges row-major V [seq x heads*d_k] to per-head column-major [heads][d_k][seq].
Row mha_transpose_values(std::span<const std::int64_t> values, const QMha& m);

}  // namespace rowops

// ---- batch kernels ----

/// Input [rows x in] in the activation format.
QTensor dense_q(const QTensor& x, const QDense& d, const QuantConfig& cfg, OpCounter* ops = nullptr);
/// Restructured softmax over each row.
QTensor softmax_restructured(const QTensor& z, const SoftmaxUnit& u, OpCounter* ops = nullptr);
QTensor softmax_legacy(const QTensor& z, const SoftmaxUnit& u, OpCounter* ops = nullptr);
/// Convenience: builds the tables for width z.cols() from `cfg`.
QTensor softmax_q(const QTensor& z, const QuantConfig& cfg, OpCounter* ops = nullptr);
QTensor layernorm_q(const QTensor& x, const QLayerNorm& n, const QuantConfig& cfg,
                    OpCounter* ops = nullptr);
/// Worst-case |layernorm_q - float layer norm| for one row `x` (already on
/// the activation grid) with the layer's dequantized gamma and beta. Covers
/// the 1/d constant, product rounding, the inverse-sqrt table (local slope
/// over half a cell plus entry rounding) and the final casts. Returns
/// infinity when the variance falls outside the table domain.
double layernorm_error_bound(std::span<const double> x, const QLayerNorm& n, const QuantConfig& cfg);

QTensor mha_q_batch(const QTensor& x, const QMha& m, const QuantConfig& cfg,
                    OpCounter* ops = nullptr);
QTensor residual_add_q(const QTensor& a, const QTensor& b, const QuantConfig& cfg,
                       OpCounter* ops = nullptr);
QTensor pool_q(const QTensor& x, const QPool& p, const QuantConfig& cfg, OpCounter* ops = nullptr);
QTensor apply_layer_q(const QLayer& layer, const QTensor& x, std::span<const QTensor> earlier,
                      const QTensor& graph_input, const QuantConfig& cfg, OpCounter* ops = nullptr);

/// Quantizes a real input matrix into the activation format.
QTensor quantize_input(const QModel& qm, const Matrix& x);
/// Batch fixed-point forward pass; every layer's output in order.
std::vector<QTensor> fixed_forward_all(const QModel& qm, const QTensor& x, OpCounter* ops = nullptr);
QTensor fixed_forward(const QModel& qm, const QTensor& x, OpCounter* ops = nullptr);
Matrix fixed_forward(const QModel& qm, const Matrix& x, OpCounter* ops = nullptr);

}  // namespace fxformer
