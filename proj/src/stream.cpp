// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/stream.hpp"

#include <algorithm>

#include "fxformer/error.hpp"

namespace fxformer {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using rowops::Row;

OpTerm mul(int fan_in) { return {OpKind::multiply, fan_in}; }
OpTerm lut() { return {OpKind::lookup, 1}; }
OpTerm elem(int fan_in = 1) { return {OpKind::elementwise, fan_in}; }

std::uint64_t table_bits(const LutTable& t) {
  return static_cast<std::uint64_t>(t.spec().table_size) *
         static_cast<std::uint64_t>(t.spec().entry_format.total_bits());
}

StageInfo stage(std::string name, std::size_t layer, Shape in, std::size_t out_width) {
  StageInfo s;
  s.name = std::move(name);
  s.layer = layer;
  s.tokens_in = in.rows;
  s.tokens_out = in.rows;
  s.in_width = in.cols;
  s.out_width = out_width;
  return s;
}

std::string prefix(std::size_t index, const char* kind) {
  return "L" + std::to_string(index) + "." + kind;
}

// Softmax phases over `groups` independent softmaxes of width `k` per token
// (sigmoid: groups = units, k = 2).
void add_softmax_stages(std::vector<StageInfo>& out, const std::string& base, std::size_t layer,
                        Shape in, const SoftmaxUnit& u, bool sigmoid, const QuantConfig& cfg) {
  const auto k = static_cast<int>(sigmoid ? 2 : u.width);
  const std::size_t groups = sigmoid ? in.cols : 1;
  const bool legacy = u.variant == SoftmaxVariant::legacy;
  const std::size_t kk = static_cast<std::size_t>(k);
  const int act_bits = cfg.activation_format.total_bits();

  StageInfo p1 = stage(base + ".exp", layer, in, groups * (legacy ? (sigmoid ? 2 : kk * kk) : kk));
  p1.ops = {legacy ? elem() : elem(k), lut()};
  p1.table_bits = table_bits(u.exp);
  p1.operand_bits = act_bits;

  StageInfo p2 = stage(base + ".sum", layer, {in.rows, p1.out_width},
                       p1.out_width + (legacy ? 0 : groups));
  if (legacy) p2.out_width = groups * (sigmoid ? 1 : kk);
  p2.ops = {elem(k), lut()};
  p2.table_bits = table_bits(u.reciprocal);
  p2.operand_bits = act_bits;

  StageInfo p3 = stage(base + ".norm", layer, {in.rows, p2.out_width}, in.cols);
  if (legacy) {
    p3.ops = {elem()};
  } else {
    p3.ops = {mul(1)};
    p3.multiplies = sigmoid ? groups : kk;
  }
  p3.operand_bits = act_bits;
  out.push_back(std::move(p1));
  out.push_back(std::move(p2));
  out.push_back(std::move(p3));
}

// ---- stage logic ----

class DenseLinear final : public StageLogic {
 public:
  DenseLinear(const QDense& d, const QuantConfig& cfg, OpCounter* ops) : d_(d), cfg_(cfg), ops_(ops) {}
  std::optional<Token> fire(std::span<Token> in) override {
    Row y = rowops::dense_linear(in[0].data, d_, cfg_, ops_);
    if (d_.activation == Activation::relu) rowops::relu_inplace(y);
    return Token{std::move(y), {}};
  }

 private:
  const QDense& d_;
  const QuantConfig& cfg_;
  OpCounter* ops_;
};

class SoftmaxPhase final : public StageLogic {
 public:
  SoftmaxPhase(int phase, const SoftmaxUnit& u, bool sigmoid, OpCounter* ops)
      : phase_(phase), u_(u), sigmoid_(sigmoid), ops_(ops) {}
  std::optional<Token> fire(std::span<Token> in) override {
    Token& t = in[0];
    switch (phase_) {
      case 1:
        return Token{sigmoid_ ? rowops::sigmoid_phase1(t.data, u_, ops_)
                              : rowops::softmax_phase1(t.data, u_, ops_),
                     {}};
      case 2: {
        Row b = sigmoid_ ? rowops::sigmoid_phase2(t.data, u_, ops_)
                         : rowops::softmax_phase2(t.data, u_, ops_);
        return Token{std::move(t.data), std::move(b)};
      }
      default:
        return Token{sigmoid_ ? rowops::sigmoid_phase3(t.data, t.aux, u_, ops_)
                              : rowops::softmax_phase3(t.data, t.aux, u_, ops_),
                     {}};
    }
  }

 private:
  int phase_;
  const SoftmaxUnit& u_;
  bool sigmoid_;
  OpCounter* ops_;
};

// K/V register arrays shared by the attention stages of one layer instance.
struct MhaRegisters {
  Row keys;
  Row values;
  Row values_t;
  bool reshaped = false;
};

class MhaStage final : public StageLogic {
 public:
  MhaStage(int phase, const QMha& m, const QuantConfig& cfg, std::shared_ptr<MhaRegisters> regs,
           OpCounter* ops)
      : phase_(phase), m_(m), cfg_(cfg), regs_(std::move(regs)), ops_(ops) {}

  std::optional<Token> fire(std::span<Token> in) override {
    const Row& x = in[0].data;
    MhaRegisters& r = *regs_;
    switch (phase_) {
      case 1: {
        Row k, v;
        Row q = rowops::mha_project(x, m_, cfg_, k, v, ops_);
        r.keys.insert(r.keys.end(), k.begin(), k.end());
        r.values.insert(r.values.end(), v.begin(), v.end());
        return Token{std::move(q), {}};
      }
      case 2:
        if (!r.reshaped) {
          r.values_t = rowops::mha_transpose_values(r.values, m_);
          r.reshaped = true;
        }
        return Token{rowops::mha_scores(x, r.keys, m_, cfg_, ops_), {}};
      case 3:
        return Token{rowops::mha_weighted(x, r.values_t, m_, cfg_, ops_), {}};
      default:
        return Token{rowops::mha_output(x, m_, cfg_, ops_), {}};
    }
  }

 private:
  int phase_;
  const QMha& m_;
  const QuantConfig& cfg_;
  std::shared_ptr<MhaRegisters> regs_;
  OpCounter* ops_;
};

class LayerNormStage final : public StageLogic {
 public:
  LayerNormStage(int phase, const QLayerNorm& n, const QuantConfig& cfg, OpCounter* ops)
      : phase_(phase), n_(n), cfg_(cfg), ops_(ops) {}

  std::optional<Token> fire(std::span<Token> in) override {
    Token& t = in[0];
    switch (phase_) {
      case 1: {
        const std::int64_t mean = rowops::ln_mean(t.data, n_, cfg_, ops_);
        return Token{std::move(t.data), {mean}};
      }
      case 2:
        return Token{rowops::ln_deviation(t.data, t.aux.at(0), cfg_, ops_), {}};
      case 3: {
        const std::int64_t var = rowops::ln_variance(t.data, n_, cfg_, ops_);
        return Token{std::move(t.data), {var}};
      }
      case 4:
        return Token{rowops::ln_normalize(t.data, t.aux.at(0), n_, cfg_, ops_), {}};
      default:
        return Token{rowops::ln_affine(t.data, n_, cfg_, ops_), {}};
    }
  }

 private:
  int phase_;
  const QLayerNorm& n_;
  const QuantConfig& cfg_;
  OpCounter* ops_;
};

class ResidualStage final : public StageLogic {
 public:
  ResidualStage(const QuantConfig& cfg, OpCounter* ops) : cfg_(cfg), ops_(ops) {}
  std::optional<Token> fire(std::span<Token> in) override {
    return Token{rowops::residual(in[0].data, in[1].data, cfg_, ops_), {}};
  }

 private:
  const QuantConfig& cfg_;
  OpCounter* ops_;
};

class PoolStage final : public StageLogic {
 public:
  PoolStage(const QPool& p, const QuantConfig& cfg, std::size_t rows, OpCounter* ops)
      : p_(p), cfg_(cfg), rows_(rows), ops_(ops) {}
  std::optional<Token> fire(std::span<Token> in) override {
    rowops::pool_accumulate(sum_, in[0].data, cfg_, ops_);
    if (++seen_ < rows_) return std::nullopt;
    return Token{rowops::pool_finish(sum_, p_, cfg_, ops_), {}};
  }

 private:
  const QPool& p_;
  const QuantConfig& cfg_;
  std::size_t rows_;
  OpCounter* ops_;
  Row sum_;
  std::size_t seen_ = 0;
};

void push_softmax_logic(std::vector<std::unique_ptr<StageLogic>>& out, const SoftmaxUnit& u,
                        bool sigmoid, OpCounter* ops) {
  for (int phase = 1; phase <= 3; ++phase)
    out.push_back(std::make_unique<SoftmaxPhase>(phase, u, sigmoid, ops));
}

}  // namespace

std::vector<StageInfo> describe_layer(const QLayer& layer, const QuantConfig& cfg, Shape in,
                                      std::size_t index) {
  const int act_bits = cfg.activation_format.total_bits();
  const int w_bits = cfg.weight_format.total_bits();
  const int acc_bits = cfg.accumulator_format.total_bits();
  const auto uw = static_cast<std::uint64_t>(w_bits);
  std::vector<StageInfo> out;
  std::visit(
      overloaded{
          [&](const QDense& d) {
            const auto units = static_cast<std::size_t>(d.units);
            StageInfo s = stage(prefix(index, "dense"), index, in, units);
            s.ops = {mul(d.in)};
            if (d.activation == Activation::relu) s.ops.push_back(elem());
            s.multiplies = static_cast<std::uint64_t>(d.in) * units;
            s.operand_bits = std::max(act_bits, w_bits);
            s.weight_bits = (s.multiplies + units) * uw;
            out.push_back(std::move(s));
            if (d.activation == Activation::softmax || d.activation == Activation::sigmoid)
              add_softmax_stages(out, prefix(index, "softmax"), index, {in.rows, units}, *d.softmax,
                                 d.activation == Activation::sigmoid, cfg);
          },
          [&](const QMha& m) {
            const auto h = static_cast<std::uint64_t>(m.heads);
            const auto dk = static_cast<std::uint64_t>(m.d_k);
            const auto dm = static_cast<std::uint64_t>(m.d_model);
            const auto seq = static_cast<std::uint64_t>(in.rows);
            const bool legacy = m.softmax->variant == SoftmaxVariant::legacy;

            StageInfo p = stage(prefix(index, "mha.project"), index, in, h * dk);
            p.ops = {mul(m.d_model)};
            p.multiplies = 3 * h * dm * dk;
            p.operand_bits = std::max(act_bits, w_bits);
            p.weight_bits = p.multiplies * uw;

            StageInfo s = stage(prefix(index, "mha.score"), index, {in.rows, h * dk}, h * seq);
            s.ops = {mul(m.d_k), mul(1), legacy ? elem() : elem(static_cast<int>(seq)), lut(),
                     elem(static_cast<int>(seq)), lut()};
            if (!legacy) s.ops.push_back(mul(1));
            s.multiplies = h * seq * dk + h * seq + (legacy ? 0 : h * seq);
            s.operand_bits = std::max({act_bits, acc_bits, w_bits});
            s.register_bits = seq * h * dk * static_cast<std::uint64_t>(act_bits);
            s.table_bits = table_bits(m.softmax->exp) + table_bits(m.softmax->reciprocal);
            s.barrier = 0;

            StageInfo w = stage(prefix(index, "mha.weighted"), index, {in.rows, h * seq}, h * dk);
            w.ops = {mul(static_cast<int>(seq))};
            w.multiplies = h * seq * dk;
            w.operand_bits = act_bits;
            w.register_bits = seq * h * dk * static_cast<std::uint64_t>(act_bits);

            StageInfo o = stage(prefix(index, "mha.output"), index, {in.rows, h * dk}, dm);
            o.ops = {mul(static_cast<int>(h * dk))};
            o.multiplies = h * dk * dm;
            o.operand_bits = std::max(act_bits, w_bits);
            o.weight_bits = (o.multiplies + dm) * uw;

            out.push_back(std::move(p));
            out.push_back(std::move(s));
            out.push_back(std::move(w));
            out.push_back(std::move(o));
          },
          [&](const QLayerNorm& n) {
            const auto d = static_cast<std::uint64_t>(n.dim);
            StageInfo s1 = stage(prefix(index, "ln.mean"), index, in, in.cols + 1);
            s1.ops = {elem(n.dim), mul(1)};
            s1.multiplies = 1;
            s1.operand_bits = std::max(acc_bits, w_bits);
            StageInfo s2 = stage(prefix(index, "ln.dev"), index, {in.rows, in.cols + 1}, in.cols);
            s2.ops = {elem()};
            StageInfo s3 = stage(prefix(index, "ln.var"), index, in, in.cols + 1);
            s3.ops = {mul(n.dim), mul(1)};
            s3.multiplies = d + 1;
            s3.operand_bits = acc_bits;
            StageInfo s4 = stage(prefix(index, "ln.norm"), index, {in.rows, in.cols + 1}, in.cols);
            s4.ops = {lut(), mul(1)};
            s4.multiplies = d;
            s4.operand_bits = acc_bits;
            s4.table_bits = table_bits(*n.inv_sqrt);
            StageInfo s5 = stage(prefix(index, "ln.affine"), index, in, in.cols);
            s5.ops = {mul(1), elem()};
            s5.multiplies = d;
            s5.operand_bits = std::max(act_bits, w_bits);
            s5.weight_bits = 2 * d * uw;
            out.push_back(std::move(s1));
            out.push_back(std::move(s2));
            out.push_back(std::move(s3));
            out.push_back(std::move(s4));
            out.push_back(std::move(s5));
          },
          [&](const QResidual&) {
            StageInfo s = stage(prefix(index, "residual"), index, in, in.cols);
            s.ops = {elem()};
            s.input_ports = 2;
            out.push_back(std::move(s));
          },
          [&](const QPool&) {
            StageInfo s = stage(prefix(index, "pool"), index, in, in.cols);
            s.ops = {elem(), mul(1)};
            s.tokens_out = 1;
            // The 1/seq scaling runs once per sequence on the final token;
            // sizing by width keeps the multiplier array explicit.
            s.multiplies = in.cols;
            s.operand_bits = std::max(acc_bits, w_bits);
            out.push_back(std::move(s));
          },
      },
      layer);
  return out;
}

std::vector<StageInfo> describe_model(const QModel& qm) {
  std::vector<StageInfo> all;
  Shape in = qm.input_shape();
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    auto s = describe_layer(qm.layers[i], qm.config, in, i);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    in = qm.shapes[i];
  }
  return all;
}

std::vector<std::unique_ptr<StageLogic>> make_layer_logic(const QLayer& layer,
                                                          const QuantConfig& cfg, Shape in,
                                                          OpCounter* ops) {
  std::vector<std::unique_ptr<StageLogic>> out;
  std::visit(overloaded{
                 [&](const QDense& d) {
                   out.push_back(std::make_unique<DenseLinear>(d, cfg, ops));
                   if (d.activation == Activation::softmax || d.activation == Activation::sigmoid)
                     push_softmax_logic(out, *d.softmax, d.activation == Activation::sigmoid, ops);
                 },
                 [&](const QMha& m) {
                   auto regs = std::make_shared<MhaRegisters>();
                   for (int phase = 1; phase <= 4; ++phase)
                     out.push_back(std::make_unique<MhaStage>(phase, m, cfg, regs, ops));
                 },
                 [&](const QLayerNorm& n) {
                   for (int phase = 1; phase <= 5; ++phase)
                     out.push_back(std::make_unique<LayerNormStage>(phase, n, cfg, ops));
                 },
                 [&](const QResidual&) { out.push_back(std::make_unique<ResidualStage>(cfg, ops)); },
                 [&](const QPool& p) { out.push_back(std::make_unique<PoolStage>(p, cfg, in.rows, ops)); },
             },
             layer);
  return out;
}

LayerStreamer::LayerStreamer(const QLayer& layer, const QuantConfig& cfg, Shape in, OpCounter* ops)
    : LayerStreamer(describe_layer(layer, cfg, in, 0), make_layer_logic(layer, cfg, in, ops)) {
  if (const auto* m = std::get_if<QMha>(&layer); m && in.rows != static_cast<std::size_t>(m->seq_len))
    throw InputError("MHA layer expects " + std::to_string(m->seq_len) + " rows, got " +
                     std::to_string(in.rows));
}

LayerStreamer::LayerStreamer(std::vector<StageInfo> info,
                             std::vector<std::unique_ptr<StageLogic>> logic)
    : info_(std::move(info)), logic_(std::move(logic)) {
  if (info_.empty() || info_.size() != logic_.size())
    throw InvariantError("stage description and logic disagree");
  queues_.resize(info_.size());
  for (std::size_t s = 0; s < info_.size(); ++s)
    queues_[s].resize(static_cast<std::size_t>(info_[s].input_ports));
  fired_.assign(info_.size(), 0);
  pushed_.assign(static_cast<std::size_t>(info_.front().input_ports), 0);
}

void LayerStreamer::push(std::span<const std::int64_t> row) { feed(0, row); }

void LayerStreamer::push_skip(std::span<const std::int64_t> row) {
  if (info_.front().input_ports < 2) throw StreamError("layer has no skip input");
  feed(1, row);
}

void LayerStreamer::feed(int port, std::span<const std::int64_t> row) {
  const auto p = static_cast<std::size_t>(port);
  if (pushed_[p] >= info_.front().tokens_in) throw StreamError("sequence overflow");
  if (row.size() != info_.front().in_width)
    throw StreamError("row width " + std::to_string(row.size()) + " does not match " +
                      std::to_string(info_.front().in_width));
  ++pushed_[p];
  queues_[0][p].push_back(Token{Row(row.begin(), row.end()), {}});
  run();
}

void LayerStreamer::run() {
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t s = 0; s < info_.size(); ++s) {
      auto& ports = queues_[s];
      const int b = info_[s].barrier;
      while (std::all_of(ports.begin(), ports.end(), [](const auto& q) { return !q.empty(); }) &&
             (b < 0 || fired_[static_cast<std::size_t>(b)] == info_[static_cast<std::size_t>(b)].tokens_in)) {
        std::vector<Token> in;
        for (auto& q : ports) {
          in.push_back(std::move(q.front()));
          q.pop_front();
        }
        auto t = logic_[s]->fire(in);
        ++fired_[s];
        progress = true;
        if (!t) continue;
        if (s + 1 == info_.size()) out_.push_back(std::move(t->data));
        else queues_[s + 1][0].push_back(std::move(*t));
      }
    }
  }
}

std::optional<Row> LayerStreamer::pop() {
  if (out_.empty()) return std::nullopt;
  Row r = std::move(out_.front());
  out_.pop_front();
  return r;
}

void LayerStreamer::finish() {
  for (auto n : pushed_)
    if (n < info_.front().tokens_in) throw StreamError("truncated sequence");
  run();
  for (std::size_t s = 0; s < info_.size(); ++s)
    if (fired_[s] != info_[s].tokens_in)
      throw InvariantError("stage " + info_[s].name + " consumed " + std::to_string(fired_[s]) +
                           " of " + std::to_string(info_[s].tokens_in) + " tokens");
}

namespace {

QTensor drive(LayerStreamer& ls, const QTensor& x, const QTensor* skip, const FixedFormat& fmt) {
  std::vector<Row> rows;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    ls.push(x.row(r));
    if (skip) ls.push_skip(skip->row(r));
    while (auto y = ls.pop()) rows.push_back(std::move(*y));
  }
  ls.finish();
  while (auto y = ls.pop()) rows.push_back(std::move(*y));
  const std::size_t cols = ls.stages().back().out_width;
  QTensor out({rows.size(), cols}, fmt);
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  return out;
}

}  // namespace

QTensor stream_layer(const QLayer& layer, const QuantConfig& cfg, const QTensor& x,
                     const QTensor* skip, OpCounter* ops) {
  LayerStreamer ls(layer, cfg, {x.rows(), x.cols()}, ops);
  if ((ls.stages().front().input_ports == 2) != (skip != nullptr))
    throw InputError("residual layers need exactly one skip input");
  return drive(ls, x, skip, cfg.activation_format);
}

QTensor mha_q_stream(const QTensor& x, const QMha& m, const QuantConfig& cfg, OpCounter* ops) {
  return stream_layer(QLayer{m}, cfg, x, nullptr, ops);
}

QTensor softmax_stream(const QTensor& z, const SoftmaxUnit& u, const QuantConfig& cfg,
                       OpCounter* ops) {
  std::vector<StageInfo> info;
  add_softmax_stages(info, "softmax", 0, {z.rows(), z.cols()}, u, false, cfg);
  std::vector<std::unique_ptr<StageLogic>> logic;
  push_softmax_logic(logic, u, false, ops);
  LayerStreamer ls(std::move(info), std::move(logic));
  return drive(ls, z, nullptr, u.act);
}

QTensor layernorm_stream(const QTensor& x, const QLayerNorm& n, const QuantConfig& cfg,
                         OpCounter* ops) {
  return stream_layer(QLayer{n}, cfg, x, nullptr, ops);
}

QTensor stream_forward(const QModel& qm, const QTensor& x, OpCounter* ops) {
  std::vector<QTensor> outs;
  outs.reserve(qm.layers.size());
  for (const auto& layer : qm.layers) {
    const QTensor& in = outs.empty() ? x : outs.back();
    const QTensor* skip = nullptr;
    if (const auto* r = std::get_if<QResidual>(&layer))
      skip = r->source < 0 ? &x : &outs[static_cast<std::size_t>(r->source)];
    outs.push_back(stream_layer(layer, qm.config, in, skip, ops));
  }
  return outs.back();
}

}  // namespace fxformer
