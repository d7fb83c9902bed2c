// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "fxformer/error.hpp"
#include "fxformer/simd.hpp"

namespace fxformer {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using rowops::Row;

void count_mul(OpCounter* ops, std::uint64_t n) {
  if (ops) ops->multiplies += n;
}
void count_add(OpCounter* ops, std::uint64_t n) {
  if (ops) ops->adds += n;
}
void count_exp(OpCounter* ops, std::uint64_t n) {
  if (ops) ops->exp_lookups += n;
}
void count_recip(OpCounter* ops, std::uint64_t n) {
  if (ops) ops->reciprocal_lookups += n;
}

std::span<const std::int64_t> slice(std::span<const std::int64_t> v, std::size_t off,
                                    std::size_t n) {
  return v.subspan(off, n);
}

struct ParamQuantizer {
  const FixedFormat& fmt;
  LayerQuantReport& report;

  std::int64_t operator()(double w) {
    const std::int64_t raw = quantize_raw(w, fmt);
    report.max_abs_error = std::max(report.max_abs_error, std::abs(to_real(raw, fmt) - w));
    if (w > fmt.max() || w < fmt.min()) ++report.saturated;
    return raw;
  }
};

std::vector<std::int64_t> transpose_quantize(const std::vector<double>& w, int rows, int cols,
                                             ParamQuantizer& q) {
  // w is [rows x cols]; result is [cols x rows].
  std::vector<std::int64_t> t(w.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      t[static_cast<std::size_t>(c) * rows + r] = q(w[static_cast<std::size_t>(r) * cols + c]);
  return t;
}

std::vector<std::int64_t> quantize_all(const std::vector<double>& w, ParamQuantizer& q) {
  std::vector<std::int64_t> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(), std::ref(q));
  return out;
}

using UnitCache = std::map<int, std::shared_ptr<const SoftmaxUnit>>;

std::shared_ptr<const SoftmaxUnit> cached_unit(UnitCache* cache, const QuantConfig& cfg, int k) {
  if (!cache) return SoftmaxUnit::make(cfg, k);
  auto& slot = (*cache)[k];
  if (!slot) slot = SoftmaxUnit::make(cfg, k);
  return slot;
}

QLayer quantize_layer_impl(const LayerSpec& layer, const QuantConfig& cfg, int seq_len,
                           LayerQuantReport& report, UnitCache* units) {
  ParamQuantizer q{cfg.weight_format, report};
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) -> QLayer {
            QDense out;
            out.in = d.in;
            out.units = d.units;
            out.activation = d.activation;
            out.weights_t = transpose_quantize(d.weights, d.in, d.units, q);
            out.bias = quantize_all(d.bias, q);
            if (d.activation == Activation::softmax) out.softmax = cached_unit(units, cfg, d.units);
            if (d.activation == Activation::sigmoid) out.softmax = cached_unit(units, cfg, 2);
            return out;
          },
          [&](const MhaLayer& m) -> QLayer {
            QMha out;
            out.heads = m.heads;
            out.d_model = m.d_model;
            out.d_k = m.d_k;
            out.seq_len = seq_len;
            for (int h = 0; h < m.heads; ++h) {
              const auto hi = static_cast<std::size_t>(h);
              out.wq_t.push_back(transpose_quantize(m.w_q[hi], m.d_model, m.d_k, q));
              out.wk_t.push_back(transpose_quantize(m.w_k[hi], m.d_model, m.d_k, q));
              out.wv_t.push_back(transpose_quantize(m.w_v[hi], m.d_model, m.d_k, q));
            }
            out.wo_t = transpose_quantize(m.w_o, m.heads * m.d_k, m.d_model, q);
            out.bo = quantize_all(m.b_o, q);
            out.scale = quantize_raw(1.0 / std::sqrt(static_cast<double>(m.d_k)), cfg.weight_format);
            out.softmax = cached_unit(units, cfg, seq_len);
            return out;
          },
          [&](const LayerNormLayer& n) -> QLayer {
            QLayerNorm out;
            out.dim = n.dim;
            out.gamma = quantize_all(n.gamma, q);
            out.beta = quantize_all(n.beta, q);
            out.inv_dim = quantize_raw(1.0 / n.dim, cfg.weight_format);
            out.eps_var = 1;
            out.inv_sqrt = std::make_shared<const LutTable>(inv_sqrt_spec(cfg));
            return out;
          },
          [&](const ResidualAddLayer& r) -> QLayer { return QResidual{r.source}; },
          [&](const PoolOverTimeLayer&) -> QLayer {
            return QPool{seq_len, quantize_raw(1.0 / seq_len, cfg.weight_format)};
          },
      },
      layer);
}

void check_cols(const QTensor& x, std::size_t expected, const char* what) {
  if (x.shape().size() != 2 || x.cols() != expected)
    throw InputError(std::string(what) + ": expected " + std::to_string(expected) +
                     " columns, got " + std::to_string(x.cols()));
}

QTensor map_rows(const QTensor& x, std::size_t out_cols, const FixedFormat& fmt,
                 const std::function<Row(std::span<const std::int64_t>)>& f) {
  QTensor out({x.rows(), out_cols}, fmt);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Row y = f(x.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

std::string_view to_string(SoftmaxVariant v) {
  return v == SoftmaxVariant::restructured ? "restructured" : "legacy";
}

SoftmaxVariant parse_softmax_variant(std::string_view s) {
  if (s == "restructured") return SoftmaxVariant::restructured;
  if (s == "legacy") return SoftmaxVariant::legacy;
  throw std::invalid_argument("unknown softmax variant '" + std::string(s) +
                              "' (expected restructured or legacy)");
}

LutSpec inv_sqrt_spec(const QuantConfig& cfg) {
  LutSpec spec;
  spec.kind = LutKind::inv_sqrt;
  spec.table_size = cfg.lut.inv_sqrt_size;
  spec.input_lo = cfg.accumulator_format.step();
  spec.input_hi = cfg.lut.inv_sqrt_hi;
  spec.entry_format = cfg.accumulator_format;
  return spec;
}

QuantConfig QuantConfig::with_precision(int integer_bits, int frac_bits) {
  QuantConfig c;
  c.weight_format = FixedFormat(integer_bits + frac_bits, integer_bits);
  c.activation_format = c.weight_format;
  const int acc_int = std::max(10, integer_bits);
  c.accumulator_format = FixedFormat(acc_int + frac_bits, acc_int);
  return c;
}

void QuantConfig::validate() const {
  if (accumulator_format.integer_bits() < activation_format.integer_bits())
    throw std::invalid_argument("accumulator integer bits must cover the activation integer bits");
  if (!activation_format.is_signed() || !accumulator_format.is_signed() || !weight_format.is_signed())
    throw std::invalid_argument("pipeline formats must be signed");
  if (lut.exp_hi > 0.0) throw std::invalid_argument("exp table must end at or below 0");
}

double SoftmaxUnit::lut_error_bound() const {
  if (variant == SoftmaxVariant::restructured) return std::max(exp.error_bound(), reciprocal.error_bound());
  // Legacy outputs are 1/S with S >= each exp term, so an exp lookup only
  // contributes its relative cell error. Sums past the reciprocal table are
  // clamped to 1/hi.
  const double exp_rel = std::expm1(exp.spec().cell_width() / 2) + exp.spec().entry_format.step();
  return std::max({exp_rel, reciprocal.error_bound(), 1.0 / reciprocal.spec().input_hi});
}

std::shared_ptr<const SoftmaxUnit> SoftmaxUnit::make(const QuantConfig& cfg, int k) {
  if (k < 1) throw std::invalid_argument("softmax width must be >= 1");
  const auto& L = cfg.lut;
  LutSpec e;
  LutSpec r;
  e.kind = LutKind::exp;
  e.table_size = L.exp_size;
  r.kind = LutKind::reciprocal;
  r.table_size = L.reciprocal_size;
  r.entry_format = cfg.activation_format;
  if (cfg.softmax == SoftmaxVariant::restructured) {
    e.input_lo = L.exp_lo;
    e.input_hi = L.exp_hi;
    e.entry_format = cfg.activation_format;
    // Sums lie in [1, k]; the upper margin keeps s == k off the clamp.
    r.input_lo = L.reciprocal_lo;
    r.input_hi = k + L.reciprocal_lo;
  } else {
    e.input_lo = L.legacy_exp_lo;
    e.input_hi = L.legacy_exp_hi;
    e.entry_format = cfg.accumulator_format;
    r.input_lo = L.legacy_reciprocal_lo;
    r.input_hi = L.legacy_reciprocal_scale * k + L.legacy_reciprocal_lo;
  }
  return std::make_shared<const SoftmaxUnit>(SoftmaxUnit{cfg.softmax, k, cfg.activation_format,
                                                          cfg.accumulator_format, LutTable(e),
                                                          LutTable(r)});
}

QLayer quantize_layer(const LayerSpec& layer, const QuantConfig& cfg, int seq_len) {
  LayerQuantReport report;
  return quantize_layer_impl(layer, cfg, seq_len, report, nullptr);
}

QModel quantize_model(const ModelGraph& g, const QuantConfig& cfg) {
  cfg.validate();
  QModel qm;
  qm.name = g.name;
  qm.seq_len = g.seq_len;
  qm.input_dim = g.input_dim;
  qm.config = cfg;
  qm.shapes = validate(g);
  UnitCache units;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    LayerQuantReport rep;
    rep.index = i;
    rep.kind = std::string(layer_kind(g.layers[i]));
    rep.parameters = count_parameters(g.layers[i]);
    qm.layers.push_back(quantize_layer_impl(g.layers[i], cfg, g.seq_len, rep, &units));
    qm.report.push_back(rep);
  }
  return qm;
}

namespace rowops {

Row dense_linear(std::span<const std::int64_t> x, const QDense& d, const QuantConfig& cfg,
                 OpCounter* ops) {
  const auto& act = cfg.activation_format;
  const auto& acc = cfg.accumulator_format;
  const simd::DotFormats f{act, cfg.weight_format, acc};
  const auto in = static_cast<std::size_t>(d.in);
  Row y(static_cast<std::size_t>(d.units));
  for (std::size_t j = 0; j < y.size(); ++j) {
    std::int64_t s = simd::dot(x, slice(d.weights_t, j * in, in), f);
    s = add_raw(s, acc, d.bias[j], cfg.weight_format, acc);
    y[j] = cast_raw(s, acc, act);
  }
  count_mul(ops, in * y.size());
  count_add(ops, in * y.size());
  return y;
}

void relu_inplace(std::span<std::int64_t> y) {
  for (auto& v : y) v = std::max<std::int64_t>(v, 0);
}

Row softmax_phase1(std::span<const std::int64_t> z, const SoftmaxUnit& u, OpCounter* ops) {
  const std::size_t k = z.size();
  if (u.variant == SoftmaxVariant::legacy) {
    Row a(k * k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        a[i * k + j] = u.exp.lookup_raw(sub_raw(z[j], u.act, z[i], u.act, u.acc), u.acc);
    count_exp(ops, k * k);
    return a;
  }
  const std::int64_t m = *std::max_element(z.begin(), z.end());
  Row e(k);
  for (std::size_t j = 0; j < k; ++j)
    e[j] = u.exp.lookup_raw(sub_raw(z[j], u.act, m, u.act, u.acc), u.acc);
  count_exp(ops, k);
  return e;
}

Row softmax_phase2(std::span<const std::int64_t> a, const SoftmaxUnit& u, OpCounter* ops) {
  const auto& ef = u.exp.spec().entry_format;
  if (u.variant == SoftmaxVariant::legacy) {
    const auto k = static_cast<std::size_t>(u.width);
    Row out(k);
    for (std::size_t i = 0; i < k; ++i) {
      std::int64_t s = 0;
      for (std::size_t j = 0; j < k; ++j) s = add_raw(s, u.acc, a[i * k + j], ef, u.acc);
      out[i] = u.reciprocal.lookup_raw(s, u.acc);
    }
    count_add(ops, k * k);
    count_recip(ops, k);
    return out;
  }
  std::int64_t s = 0;
  for (auto e : a) s = add_raw(s, u.acc, e, ef, u.acc);
  count_add(ops, a.size());
  count_recip(ops, 1);
  return {u.reciprocal.lookup_raw(s, u.acc)};
}

Row softmax_phase3(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                   const SoftmaxUnit& u, OpCounter* ops) {
  if (u.variant == SoftmaxVariant::legacy) return {b.begin(), b.end()};
  const auto& ef = u.exp.spec().entry_format;
  const auto& rf = u.reciprocal.spec().entry_format;
  Row out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = mul_raw(a[j], ef, b[0], rf, u.act);
  count_mul(ops, a.size());
  return out;
}

Row softmax_row(std::span<const std::int64_t> z, const SoftmaxUnit& u, OpCounter* ops) {
  const Row a = softmax_phase1(z, u, ops);
  const Row b = softmax_phase2(a, u, ops);
  return softmax_phase3(a, b, u, ops);
}

Row sigmoid_phase1(std::span<const std::int64_t> y, const SoftmaxUnit& u, OpCounter* ops) {
  Row a(2 * y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (u.variant == SoftmaxVariant::legacy) {
      a[2 * j] = u.exp.lookup_raw(0, u.acc);
      a[2 * j + 1] = u.exp.lookup_raw(sub_raw(0, u.act, y[j], u.act, u.acc), u.acc);
    } else {
      const std::int64_t m = std::max<std::int64_t>(y[j], 0);
      a[2 * j] = u.exp.lookup_raw(sub_raw(y[j], u.act, m, u.act, u.acc), u.acc);
      a[2 * j + 1] = u.exp.lookup_raw(sub_raw(0, u.act, m, u.act, u.acc), u.acc);
    }
  }
  count_exp(ops, a.size());
  return a;
}

Row sigmoid_phase2(std::span<const std::int64_t> a, const SoftmaxUnit& u, OpCounter* ops) {
  const auto& ef = u.exp.spec().entry_format;
  Row r(a.size() / 2);
  for (std::size_t j = 0; j < r.size(); ++j) {
    const std::int64_t s = add_raw(cast_raw(a[2 * j], ef, u.acc), u.acc, a[2 * j + 1], ef, u.acc);
    r[j] = u.reciprocal.lookup_raw(s, u.acc);
  }
  count_add(ops, a.size());
  count_recip(ops, r.size());
  return r;
}

Row sigmoid_phase3(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
                   const SoftmaxUnit& u, OpCounter* ops) {
  if (u.variant == SoftmaxVariant::legacy) return {b.begin(), b.end()};
  const auto& ef = u.exp.spec().entry_format;
  const auto& rf = u.reciprocal.spec().entry_format;
  Row out(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) out[j] = mul_raw(a[2 * j], ef, b[j], rf, u.act);
  count_mul(ops, b.size());
  return out;
}

Row sigmoid_row(std::span<const std::int64_t> y, const SoftmaxUnit& u, OpCounter* ops) {
  const Row a = sigmoid_phase1(y, u, ops);
  const Row b = sigmoid_phase2(a, u, ops);
  return sigmoid_phase3(a, b, u, ops);
}

std::int64_t ln_mean(std::span<const std::int64_t> x, const QLayerNorm& n, const QuantConfig& cfg,
                     OpCounter* ops) {
  const auto& acc = cfg.accumulator_format;
  std::int64_t s = 0;
  for (auto v : x) s = add_raw(s, acc, v, cfg.activation_format, acc);
  count_add(ops, x.size());
  count_mul(ops, 1);
  return mul_raw(s, acc, n.inv_dim, cfg.weight_format, acc);
}

Row ln_deviation(std::span<const std::int64_t> x, std::int64_t mean, const QuantConfig& cfg,
                 OpCounter* ops) {
  const auto& acc = cfg.accumulator_format;
  Row dm(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) dm[j] = sub_raw(x[j], cfg.activation_format, mean, acc, acc);
  count_add(ops, x.size());
  return dm;
}

std::int64_t ln_variance(std::span<const std::int64_t> dm, const QLayerNorm& n,
                         const QuantConfig& cfg, OpCounter* ops) {
  const auto& acc = cfg.accumulator_format;
  const std::int64_t s = simd::dot(dm, dm, {acc, acc, acc});
  count_mul(ops, dm.size() + 1);
  count_add(ops, dm.size());
  return mul_raw(s, acc, n.inv_dim, cfg.weight_format, acc);
}

Row ln_normalize(std::span<const std::int64_t> dm, std::int64_t var, const QLayerNorm& n,
                 const QuantConfig& cfg, OpCounter* ops) {
  const auto& acc = cfg.accumulator_format;
  const std::int64_t inv = n.inv_sqrt->lookup_raw(std::max(var, n.eps_var), acc);
  const auto& inv_fmt = n.inv_sqrt->spec().entry_format;
  Row out(dm.size());
  for (std::size_t j = 0; j < dm.size(); ++j)
    out[j] = mul_raw(dm[j], acc, inv, inv_fmt, cfg.activation_format);
  if (ops) ops->inv_sqrt_lookups += 1;
  count_mul(ops, dm.size());
  return out;
}

Row ln_affine(std::span<const std::int64_t> norm, const QLayerNorm& n, const QuantConfig& cfg,
              OpCounter* ops) {
  const auto& acc = cfg.accumulator_format;
  const auto& w = cfg.weight_format;
  Row out(norm.size());
  for (std::size_t j = 0; j < norm.size(); ++j) {
    const std::int64_t p = mul_raw(norm[j], cfg.activation_format, n.gamma[j], w, acc);
    out[j] = cast_raw(add_raw(p, acc, n.beta[j], w, acc), acc, cfg.activation_format);
  }
  count_mul(ops, norm.size());
  count_add(ops, norm.size());
  return out;
}

void pool_accumulate(Row& sum, std::span<const std::int64_t> x, const QuantConfig& cfg,
                     OpCounter* ops) {
  if (sum.empty()) sum.assign(x.size(), 0);
  const auto& acc = cfg.accumulator_format;
  for (std::size_t j = 0; j < x.size(); ++j)
    sum[j] = add_raw(sum[j], acc, x[j], cfg.activation_format, acc);
  count_add(ops, x.size());
}

Row pool_finish(std::span<const std::int64_t> sum, const QPool& p, const QuantConfig& cfg,
                OpCounter* ops) {
  Row out(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j)
    out[j] = mul_raw(sum[j], cfg.accumulator_format, p.inv_seq, cfg.weight_format,
                     cfg.activation_format);
  count_mul(ops, sum.size());
  return out;
}

Row residual(std::span<const std::int64_t> a, std::span<const std::int64_t> b,
             const QuantConfig& cfg, OpCounter* ops) {
  const auto& act = cfg.activation_format;
  Row out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = add_raw(a[j], act, b[j], act, act);
  count_add(ops, a.size());
  return out;
}

Row mha_project(std::span<const std::int64_t> x, const QMha& m, const QuantConfig& cfg, Row& k,
                Row& v, OpCounter* ops) {
  const auto& act = cfg.activation_format;
  const auto& acc = cfg.accumulator_format;
  const simd::DotFormats f{act, cfg.weight_format, acc};
  const auto dm = static_cast<std::size_t>(m.d_model);
  const auto dk = static_cast<std::size_t>(m.d_k);
  const auto width = static_cast<std::size_t>(m.heads) * dk;
  Row q(width);
  k.assign(width, 0);
  v.assign(width, 0);
  for (std::size_t h = 0; h < static_cast<std::size_t>(m.heads); ++h) {
    for (std::size_t c = 0; c < dk; ++c) {
      q[h * dk + c] = cast_raw(simd::dot(x, slice(m.wq_t[h], c * dm, dm), f), acc, act);
      k[h * dk + c] = cast_raw(simd::dot(x, slice(m.wk_t[h], c * dm, dm), f), acc, act);
      v[h * dk + c] = cast_raw(simd::dot(x, slice(m.wv_t[h], c * dm, dm), f), acc, act);
    }
  }
  count_mul(ops, 3 * width * dm);
  count_add(ops, 3 * width * dm);
  return q;
}

Row mha_scores(std::span<const std::int64_t> q, std::span<const std::int64_t> keys, const QMha& m,
               const QuantConfig& cfg, OpCounter* ops) {
  const auto& act = cfg.activation_format;
  const auto& acc = cfg.accumulator_format;
  const auto dk = static_cast<std::size_t>(m.d_k);
  const auto heads = static_cast<std::size_t>(m.heads);
  const auto width = heads * dk;
  const std::size_t seq = keys.size() / width;
  Row probs;
  probs.reserve(heads * seq);
  Row z(seq);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = slice(q, h * dk, dk);
    for (std::size_t t = 0; t < seq; ++t) {
      const std::int64_t s = simd::dot(qh, slice(keys, t * width + h * dk, dk), {act, act, acc});
      z[t] = cast_raw(mul_raw(s, acc, m.scale, cfg.weight_format, acc), acc, act);
    }
    const Row p = softmax_row(z, *m.softmax, ops);
    probs.insert(probs.end(), p.begin(), p.end());
  }
  count_mul(ops, heads * seq * (dk + 1));
  count_add(ops, heads * seq * dk);
  return probs;
}

Row mha_weighted(std::span<const std::int64_t> probs, std::span<const std::int64_t> values_t,
                 const QMha& m, const QuantConfig& cfg, OpCounter* ops) {
  const auto& act = cfg.activation_format;
  const auto& acc = cfg.accumulator_format;
  const auto dk = static_cast<std::size_t>(m.d_k);
  const auto heads = static_cast<std::size_t>(m.heads);
  const std::size_t seq = probs.size() / heads;
  Row o(heads * dk);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t c = 0; c < dk; ++c)
      o[h * dk + c] = cast_raw(simd::dot(slice(probs, h * seq, seq),
                                         slice(values_t, (h * dk + c) * seq, seq), {act, act, acc}),
                               acc, act);
  count_mul(ops, heads * dk * seq);
  count_add(ops, heads * dk * seq);
  return o;
}

Row mha_output(std::span<const std::int64_t> o, const QMha& m, const QuantConfig& cfg,
               OpCounter* ops) {
  const auto& act = cfg.activation_format;
  const auto& acc = cfg.accumulator_format;
  const simd::DotFormats f{act, cfg.weight_format, acc};
  const std::size_t width = o.size();
  Row y(static_cast<std::size_t>(m.d_model));
  for (std::size_t j = 0; j < y.size(); ++j) {
    std::int64_t s = simd::dot(o, slice(m.wo_t, j * width, width), f);
    s = add_raw(s, acc, m.bo[j], cfg.weight_format, acc);
    y[j] = cast_raw(s, acc, act);
  }
  count_mul(ops, width * y.size());
  count_add(ops, width * y.size());
  return y;
}

Row mha_transpose_values(std::span<const std::int64_t> values, const QMha& m) {
  const auto width = static_cast<std::size_t>(m.heads) * static_cast<std::size_t>(m.d_k);
  const std::size_t seq = values.size() / width;
  Row t(values.size());
  // Column c of the concatenated V lands at [(c) * seq + row]; heads are
  // contiguous because c = h * d_k + within-head column.
  for (std::size_t r = 0; r < seq; ++r)
    for (std::size_t c = 0; c < width; ++c) t[c * seq + r] = values[r * width + c];
  return t;
}

}  // namespace rowops

QTensor dense_q(const QTensor& x, const QDense& d, const QuantConfig& cfg, OpCounter* ops) {
  check_cols(x, static_cast<std::size_t>(d.in), "dense_q");
  return map_rows(x, static_cast<std::size_t>(d.units), cfg.activation_format,
                  [&](std::span<const std::int64_t> row) {
                    Row y = rowops::dense_linear(row, d, cfg, ops);
                    switch (d.activation) {
                      case Activation::none: break;
                      case Activation::relu: rowops::relu_inplace(y); break;
                      case Activation::softmax: y = rowops::softmax_row(y, *d.softmax, ops); break;
                      case Activation::sigmoid: y = rowops::sigmoid_row(y, *d.softmax, ops); break;
                    }
                    return y;
                  });
}

QTensor softmax_restructured(const QTensor& z, const SoftmaxUnit& u, OpCounter* ops) {
  if (u.variant != SoftmaxVariant::restructured)
    throw std::invalid_argument("softmax_restructured needs a restructured unit");
  check_cols(z, static_cast<std::size_t>(u.width), "softmax_restructured");
  return map_rows(z, z.cols(), u.act,
                  [&](std::span<const std::int64_t> r) { return rowops::softmax_row(r, u, ops); });
}

QTensor softmax_legacy(const QTensor& z, const SoftmaxUnit& u, OpCounter* ops) {
  if (u.variant != SoftmaxVariant::legacy)
    throw std::invalid_argument("softmax_legacy needs a legacy unit");
  check_cols(z, static_cast<std::size_t>(u.width), "softmax_legacy");
  return map_rows(z, z.cols(), u.act,
                  [&](std::span<const std::int64_t> r) { return rowops::softmax_row(r, u, ops); });
}

QTensor softmax_q(const QTensor& z, const QuantConfig& cfg, OpCounter* ops) {
  const auto u = SoftmaxUnit::make(cfg, static_cast<int>(z.cols()));
  return cfg.softmax == SoftmaxVariant::restructured ? softmax_restructured(z, *u, ops)
                                                     : softmax_legacy(z, *u, ops);
}

double layernorm_error_bound(std::span<const double> x, const QLayerNorm& n, const QuantConfig& cfg) {
  const double d = static_cast<double>(x.size());
  const double a = cfg.activation_format.step();
  const double c = cfg.accumulator_format.step();
  const double w = cfg.weight_format.step();
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mu = sum / d;
  double var = 0.0, max_dev = 0.0;
  for (double v : x) {
    var += (v - mu) * (v - mu);
    max_dev = std::max(max_dev, std::abs(v - mu));
  }
  var /= d;
  double max_gamma = 0.0;
  for (auto g : n.gamma) max_gamma = std::max(max_gamma, std::abs(to_real(g, cfg.weight_format)));

  const double e_mu = std::abs(sum) * w + c;
  const double e_var = e_mu * e_mu + c + (d * (var + e_mu * e_mu) + d * c) * w + c;
  const LutSpec& spec = n.inv_sqrt->spec();
  const double h = spec.cell_width();
  const double lower = var - e_var - h;
  if (var <= 0.0 || lower <= 0.0 || var + e_var > spec.input_hi) return std::numeric_limits<double>::infinity();
  const double slope = 0.5 * std::pow(lower, -1.5);
  const double e_inv = slope * (e_var + h / 2) + spec.entry_format.step();
  const double inv = 1.0 / std::sqrt(var);
  const double e_norm = (max_dev + e_mu) * e_inv + e_mu * inv + a;
  return max_gamma * e_norm + c + a;
}

QTensor layernorm_q(const QTensor& x, const QLayerNorm& n, const QuantConfig& cfg, OpCounter* ops) {
  check_cols(x, static_cast<std::size_t>(n.dim), "layernorm_q");
  return map_rows(x, x.cols(), cfg.activation_format, [&](std::span<const std::int64_t> row) {
    const std::int64_t mean = rowops::ln_mean(row, n, cfg, ops);
    const Row dm = rowops::ln_deviation(row, mean, cfg, ops);
    const std::int64_t var = rowops::ln_variance(dm, n, cfg, ops);
    return rowops::ln_affine(rowops::ln_normalize(dm, var, n, cfg, ops), n, cfg, ops);
  });
}

QTensor mha_q_batch(const QTensor& x, const QMha& m, const QuantConfig& cfg, OpCounter* ops) {
  check_cols(x, static_cast<std::size_t>(m.d_model), "mha_q_batch");
  if (x.rows() != static_cast<std::size_t>(m.seq_len))
    throw InputError("mha_q_batch: expected " + std::to_string(m.seq_len) + " rows, got " +
                     std::to_string(x.rows()));
  const std::size_t seq = x.rows();
  const auto width = static_cast<std::size_t>(m.heads * m.d_k);

  // Whole-matrix projections first, then attention, then the output projection.
  Row q_all, k_all, v_all;
  for (std::size_t r = 0; r < seq; ++r) {
    Row k, v;
    const Row q = rowops::mha_project(x.row(r), m, cfg, k, v, ops);
    q_all.insert(q_all.end(), q.begin(), q.end());
    k_all.insert(k_all.end(), k.begin(), k.end());
    v_all.insert(v_all.end(), v.begin(), v.end());
  }
  const Row v_t = rowops::mha_transpose_values(v_all, m);
  QTensor out({seq, static_cast<std::size_t>(m.d_model)}, cfg.activation_format);
  for (std::size_t r = 0; r < seq; ++r) {
    const Row p = rowops::mha_scores(slice(q_all, r * width, width), k_all, m, cfg, ops);
    const Row o = rowops::mha_weighted(p, v_t, m, cfg, ops);
    const Row y = rowops::mha_output(o, m, cfg, ops);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

QTensor residual_add_q(const QTensor& a, const QTensor& b, const QuantConfig& cfg, OpCounter* ops) {
  if (a.shape() != b.shape()) throw InputError("residual_add_q: operand shapes differ");
  QTensor out(a.shape(), cfg.activation_format);
  const Row y = rowops::residual(a.raw(), b.raw(), cfg, ops);
  std::copy(y.begin(), y.end(), out.raw().begin());
  return out;
}

QTensor pool_q(const QTensor& x, const QPool& p, const QuantConfig& cfg, OpCounter* ops) {
  Row sum;
  for (std::size_t r = 0; r < x.rows(); ++r) rowops::pool_accumulate(sum, x.row(r), cfg, ops);
  if (sum.empty()) sum.assign(x.cols(), 0);
  return QTensor({1, x.cols()}, rowops::pool_finish(sum, p, cfg, ops), cfg.activation_format);
}

QTensor apply_layer_q(const QLayer& layer, const QTensor& x, std::span<const QTensor> earlier,
                      const QTensor& graph_input, const QuantConfig& cfg, OpCounter* ops) {
  return std::visit(
      overloaded{
          [&](const QDense& d) { return dense_q(x, d, cfg, ops); },
          [&](const QMha& m) { return mha_q_batch(x, m, cfg, ops); },
          [&](const QLayerNorm& n) { return layernorm_q(x, n, cfg, ops); },
          [&](const QResidual& r) {
            const QTensor& skip =
                r.source < 0 ? graph_input : earlier[static_cast<std::size_t>(r.source)];
            return residual_add_q(x, skip, cfg, ops);
          },
          [&](const QPool& p) { return pool_q(x, p, cfg, ops); },
      },
      layer);
}

QTensor quantize_input(const QModel& qm, const Matrix& x) {
  if (x.rows != static_cast<std::size_t>(qm.seq_len) ||
      x.cols != static_cast<std::size_t>(qm.input_dim))
    throw InputError("input shape [" + std::to_string(x.rows) + " x " + std::to_string(x.cols) +
                     "] does not match model [" + std::to_string(qm.seq_len) + " x " +
                     std::to_string(qm.input_dim) + "]");
  return QTensor::from_real({x.rows, x.cols}, x.data, qm.config.activation_format);
}

std::vector<QTensor> fixed_forward_all(const QModel& qm, const QTensor& x, OpCounter* ops) {
  if (x.rows() != static_cast<std::size_t>(qm.seq_len) ||
      x.cols() != static_cast<std::size_t>(qm.input_dim))
    throw InputError("fixed_forward: input shape does not match the model");
  std::vector<QTensor> outs;
  outs.reserve(qm.layers.size());
  for (const auto& layer : qm.layers) {
    const QTensor& in = outs.empty() ? x : outs.back();
    outs.push_back(apply_layer_q(layer, in, outs, x, qm.config, ops));
  }
  return outs;
}

QTensor fixed_forward(const QModel& qm, const QTensor& x, OpCounter* ops) {
  auto all = fixed_forward_all(qm, x, ops);
  return std::move(all.back());
}

Matrix fixed_forward(const QModel& qm, const Matrix& x, OpCounter* ops) {
  const QTensor y = fixed_forward(qm, quantize_input(qm, x), ops);
  return Matrix(y.rows(), y.cols(), y.to_real());
}

}  // namespace fxformer
