// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/cost.hpp"

#include <cmath>
#include <iomanip>
#include <locale>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fxformer {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::uint64_t affine(double base, double slope, std::uint64_t x) {
  return static_cast<std::uint64_t>(std::llround(base + slope * static_cast<double>(x)));
}

std::string csv_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

int dsp_per_multiply(int operand_bits, const CostCoefficients& c) {
  return operand_bits <= c.dsp_input_width ? 1 : 2;
}

std::uint64_t stage_dsp(std::uint64_t multiplies, int reuse, int operand_bits,
                        const CostCoefficients& c) {
  if (reuse < 1) throw std::invalid_argument("reuse factor must be >= 1");
  return ceil_div(multiplies, static_cast<std::uint64_t>(reuse)) *
         static_cast<std::uint64_t>(dsp_per_multiply(operand_bits, c));
}

ResourceReport estimate_resources(const QModel& qm, const ReuseConfig& rc, const CostCoefficients& c) {
  rc.validate();
  ResourceReport rep;
  const int act_bits = qm.config.activation_format.total_bits();
  for (std::size_t i = 0; i < qm.layers.size(); ++i) {
    LayerResources lr;
    lr.layer = i;
    lr.kind = std::string(std::visit(
        [](const auto& l) -> std::string_view {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, QDense>) return "dense";
          else if constexpr (std::is_same_v<T, QMha>) return "mha";
          else if constexpr (std::is_same_v<T, QLayerNorm>) return "layernorm";
          else if constexpr (std::is_same_v<T, QResidual>) return "residual_add";
          else return "pool_over_time";
        },
        qm.layers[i]));
    const Shape in = i == 0 ? qm.input_shape() : qm.shapes[i - 1];
    const int r = rc.reuse_for(i);
    for (const auto& s : describe_layer(qm.layers[i], qm.config, in, i)) {
      const int width = s.multiplies > 0 ? s.operand_bits : act_bits;
      const std::uint64_t parallel =
          s.multiplies > 0 ? ceil_div(s.multiplies, static_cast<std::uint64_t>(r)) : s.in_width;
      const std::uint64_t work = parallel * static_cast<std::uint64_t>(width);
      lr.dsp += s.multiplies > 0 ? stage_dsp(s.multiplies, r, s.operand_bits, c) : 0;
      lr.ff += affine(c.ff_base, c.ff_per_bit, work) + s.register_bits;
      lr.lut += affine(c.lut_base, c.lut_per_bit, work);
      lr.bram_bits += s.table_bits;
      if (r >= c.bram_min_reuse) lr.bram_bits += s.weight_bits;
      else lr.ff += s.weight_bits;
    }
    lr.bram_blocks = ceil_div(lr.bram_bits, c.bram_block_bits);
    rep.dsp += lr.dsp;
    rep.ff += lr.ff;
    rep.lut += lr.lut;
    rep.bram_bits += lr.bram_bits;
    rep.bram_blocks += lr.bram_blocks;
    rep.layers.push_back(std::move(lr));
  }
  return rep;
}

std::string ResourceReport::to_json() const {
  nlohmann::ordered_json j{{"dsp", dsp}, {"ff", ff}, {"lut", lut}, {"bram_bits", bram_bits},
                           {"bram_blocks", bram_blocks}, {"layers", nlohmann::ordered_json::array()}};
  for (const auto& l : layers)
    j["layers"].push_back({{"layer", l.layer},
                           {"kind", l.kind},
                           {"dsp", l.dsp},
                           {"ff", l.ff},
                           {"lut", l.lut},
                           {"bram_bits", l.bram_bits},
                           {"bram_blocks", l.bram_blocks}});
  return j.dump(2) + "\n";
}

std::string ResourceReport::to_csv() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "layer,kind,dsp,ff,lut,bram_bits,bram_blocks\n";
  for (const auto& l : layers)
    os << l.layer << ',' << l.kind << ',' << l.dsp << ',' << l.ff << ',' << l.lut << ','
       << l.bram_bits << ',' << l.bram_blocks << '\n';
  os << "total,," << dsp << ',' << ff << ',' << lut << ',' << bram_bits << ',' << bram_blocks << '\n';
  return os.str();
}

std::string ResourceReport::to_table() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  auto row = [&](const std::string& a, const std::string& b, std::uint64_t d, std::uint64_t f,
                 std::uint64_t l, std::uint64_t bb, std::uint64_t blk) {
    os << std::left << std::setw(6) << a << std::setw(16) << b << std::right << std::setw(8) << d
       << std::setw(10) << f << std::setw(10) << l << std::setw(12) << bb << std::setw(6) << blk
       << '\n';
  };
  os << std::left << std::setw(6) << "layer" << std::setw(16) << "kind" << std::right << std::setw(8)
     << "dsp" << std::setw(10) << "ff" << std::setw(10) << "lut" << std::setw(12) << "bram_bits"
     << std::setw(6) << "bram" << '\n';
  for (const auto& l : layers)
    row(std::to_string(l.layer), l.kind, l.dsp, l.ff, l.lut, l.bram_bits, l.bram_blocks);
  row("total", "", dsp, ff, lut, bram_bits, bram_blocks);
  return os.str();
}

std::vector<ParetoRow> pareto_sweep(const ModelGraph& g, const std::vector<QuantConfig>& formats,
                                    const std::vector<int>& reuses, const ReuseConfig& base,
                                    const CostCoefficients& c) {
  if (formats.empty() || reuses.empty()) throw std::invalid_argument("pareto_sweep needs formats and reuse factors");
  std::vector<ParetoRow> rows;
  for (const auto& cfg : formats) {
    const QModel qm = quantize_model(g, cfg);
    for (int r : reuses) {
      ReuseConfig rc = base;
      rc.reuse = r;
      ParetoRow row;
      row.format = cfg.activation_format.str();
      row.frac_bits = cfg.activation_format.frac_bits();
      row.reuse = r;
      row.resources = estimate_resources(qm, rc, c);
      const CycleReport cr = simulate_timing(build_schedule(qm, rc));
      row.interval_cycles = cr.initiation_interval_cycles;
      row.latency_cycles = cr.total_latency_cycles;
      row.latency_us = cr.latency_us;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string pareto_csv(const std::vector<ParetoRow>& rows) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "format,frac_bits,reuse,dsp,ff,lut,bram_bits,bram_blocks,interval_cycles,latency_cycles,latency_us\n";
  for (const auto& r : rows)
    os << '"' << r.format << '"' << ',' << r.frac_bits << ',' << r.reuse << ',' << r.resources.dsp << ','
       << r.resources.ff << ',' << r.resources.lut << ',' << r.resources.bram_bits << ','
       << r.resources.bram_blocks << ',' << r.interval_cycles << ',' << r.latency_cycles << ','
       << csv_double(r.latency_us) << '\n';
  return os.str();
}

}  // namespace fxformer
