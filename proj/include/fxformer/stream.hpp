// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fxformer/kernels.hpp"

// Row-streaming form of every layer. A layer is a short chain of stages
// passing one token per time step. The untimed LayerStreamer below and the
// cycle simulator drive the same stage objects.

namespace fxformer {

struct Token {
  rowops::Row data;
  rowops::Row aux;
};

enum class OpKind : std::uint8_t { multiply, lookup, elementwise };

/// One step of a stage's datapath; `fan_in` is the width reduced by an
/// adder tree (1 for purely elementwise work).
struct OpTerm {
  OpKind kind = OpKind::elementwise;
  int fan_in = 1;
};

struct StageInfo {
  std::string name;
  std::size_t layer = 0;
  std::vector<OpTerm> ops;
  std::uint64_t multiplies = 0;  // per input token
  int input_ports = 1;
  std::size_t tokens_in = 0;
  std::size_t tokens_out = 0;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  /// Index within the layer of a stage whose every output must have
  /// completed before this stage may fire; -1 for none.
  int barrier = -1;

  // Resource hints for the cost model.
  int operand_bits = 0;
  std::uint64_t weight_bits = 0;
  std::uint64_t register_bits = 0;
  std::uint64_t table_bits = 0;
};

class StageLogic {
 public:
  virtual ~StageLogic() = default;
  /// Consumes one token per input port; returns the output token, if any.
  virtual std::optional<Token> fire(std::span<Token> inputs) = 0;
};

/// Static description of the stages of one layer with input shape `in`.
std::vector<StageInfo> describe_layer(const QLayer& layer, const QuantConfig& cfg, Shape in,
                                      std::size_t index);
std::vector<StageInfo> describe_model(const QModel& qm);

/// Fresh stage objects for one layer. They reference `layer` and `cfg`,
/// which must outlive them.
std::vector<std::unique_ptr<StageLogic>> make_layer_logic(const QLayer& layer,
                                                          const QuantConfig& cfg, Shape in,
                                                          OpCounter* ops = nullptr);

/// Untimed row-by-row driver for one layer with unbounded internal FIFOs.
class LayerStreamer {
 public:
  LayerStreamer(const QLayer& layer, const QuantConfig& cfg, Shape in, OpCounter* ops = nullptr);
  LayerStreamer(std::vector<StageInfo> info, std::vector<std::unique_ptr<StageLogic>> logic);

  /// Feeds one row. Residual layers also need push_skip() for each row.
  /// Throws StreamError("sequence overflow") past the expected row count.
  void push(std::span<const std::int64_t> row);
  void push_skip(std::span<const std::int64_t> row);
  std::optional<rowops::Row> pop();
  /// Throws StreamError("truncated sequence") if fewer rows arrived.
  void finish();

  const std::vector<StageInfo>& stages() const { return info_; }

 private:
  void feed(int port, std::span<const std::int64_t> row);
  void run();

  std::vector<StageInfo> info_;
  std::vector<std::unique_ptr<StageLogic>> logic_;
  std::vector<std::vector<std::deque<Token>>> queues_;  // [stage][port]
  std::vector<std::size_t> fired_;
  std::deque<rowops::Row> out_;
  std::vector<std::size_t> pushed_;
};

/// Streams a whole input through one layer and collects the output rows.
QTensor stream_layer(const QLayer& layer, const QuantConfig& cfg, const QTensor& x,
                     const QTensor* skip = nullptr, OpCounter* ops = nullptr);

QTensor mha_q_stream(const QTensor& x, const QMha& m, const QuantConfig& cfg,
                     OpCounter* ops = nullptr);
QTensor softmax_stream(const QTensor& z, const SoftmaxUnit& u, const QuantConfig& cfg,
                       OpCounter* ops = nullptr);
QTensor layernorm_stream(const QTensor& x, const QLayerNorm& n, const QuantConfig& cfg,
                         OpCounter* ops = nullptr);

/// Layer-by-layer streaming evaluation of a whole model.
QTensor stream_forward(const QModel& qm, const QTensor& x, OpCounter* ops = nullptr);

}  // namespace fxformer
