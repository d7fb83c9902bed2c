// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <locale>
#include <sstream>

#include "CLI11.hpp"
#include "fxformer/error.hpp"
#include "fxformer/metrics.hpp"
#include "fxformer/stream.hpp"
#include "json.hpp"

namespace fxformer {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::float_ref: return "float";
    case RunMode::fixed: return "fixed";
    case RunMode::sim: return "sim";
  }
  return "?";
}

RunMode parse_run_mode(std::string_view s) {
  if (s == "float") return RunMode::float_ref;
  if (s == "fixed") return RunMode::fixed;
  if (s == "sim") return RunMode::sim;
  throw InputError("unknown mode '" + std::string(s) + "' (float|fixed|sim)");
}

// ---------------------------------------------------------------------------
// Config file

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw InputError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw InputError("config: unknown key '" + std::string(where) + "." + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, std::string_view where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError("config: key '" + std::string(where) + "." + key + "': " + e.what());
  }
}

void read_format(const json& j, const char* key, FixedFormat& dst) {
  if (!j.contains(key)) return;
  std::string text;
  read(j, key, text, "quantization");
  try {
    dst = FixedFormat::parse(text);
  } catch (const std::invalid_argument& e) {
    throw InputError("config: quantization." + std::string(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  check_keys(j, "", {"model", "data", "out", "trace", "mode", "seed", "samples", "quantization",
                     "softmax_variant", "lut", "reuse", "layer_reuse", "clock_period_ns", "fifo_depth",
                     "cost", "sweep"});
  RunConfig c = base;
  read(j, "model", c.model, "");
  read(j, "data", c.data, "");
  read(j, "out", c.out, "");
  read(j, "trace", c.trace, "");
  if (j.contains("mode")) {
    std::string m;
    read(j, "mode", m, "");
    c.mode = parse_run_mode(m);
  }
  read(j, "seed", c.seed, "");
  read(j, "samples", c.samples, "");
  if (j.contains("quantization")) {
    const auto& q = j["quantization"];
    check_keys(q, "quantization", {"weight", "activation", "accumulator"});
    read_format(q, "weight", c.quant.weight_format);
    read_format(q, "activation", c.quant.activation_format);
    read_format(q, "accumulator", c.quant.accumulator_format);
  }
  if (j.contains("softmax_variant")) {
    std::string v;
    read(j, "softmax_variant", v, "");
    try {
      c.quant.softmax = parse_softmax_variant(v);
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("config: softmax_variant: ") + e.what());
    }
  }
  if (j.contains("lut")) {
    const auto& l = j["lut"];
    check_keys(l, "lut", {"exp_size", "exp_lo", "exp_hi", "reciprocal_size", "reciprocal_lo",
                          "inv_sqrt_size", "inv_sqrt_hi", "legacy_exp_lo", "legacy_exp_hi",
                          "legacy_reciprocal_lo", "legacy_reciprocal_scale"});
    auto& s = c.quant.lut;
    read(l, "exp_size", s.exp_size, "lut");
    read(l, "exp_lo", s.exp_lo, "lut");
    read(l, "exp_hi", s.exp_hi, "lut");
    read(l, "reciprocal_size", s.reciprocal_size, "lut");
    read(l, "reciprocal_lo", s.reciprocal_lo, "lut");
    read(l, "inv_sqrt_size", s.inv_sqrt_size, "lut");
    read(l, "inv_sqrt_hi", s.inv_sqrt_hi, "lut");
    read(l, "legacy_exp_lo", s.legacy_exp_lo, "lut");
    read(l, "legacy_exp_hi", s.legacy_exp_hi, "lut");
    read(l, "legacy_reciprocal_lo", s.legacy_reciprocal_lo, "lut");
    read(l, "legacy_reciprocal_scale", s.legacy_reciprocal_scale, "lut");
  }
  read(j, "reuse", c.reuse.reuse, "");
  read(j, "clock_period_ns", c.reuse.clock_period_ns, "");
  if (j.contains("layer_reuse")) {
    const auto& lr = j["layer_reuse"];
    if (!lr.is_object()) throw InputError("config: 'layer_reuse' must map layer index to R");
    c.reuse.layer_reuse.clear();
    for (const auto& [k, v] : lr.items()) {
      std::size_t layer = 0;
      const auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), layer);
      if (ec != std::errc() || ptr != k.data() + k.size() || !v.is_number_integer())
        throw InputError("config: layer_reuse entry '" + k + "' needs an integer layer index and R");
      c.reuse.layer_reuse[layer] = v.get<int>();
    }
  }
  read(j, "fifo_depth", c.fifo_depth, "");
  if (j.contains("cost")) {
    const auto& k = j["cost"];
    check_keys(k, "cost", {"dsp_input_width", "ff_base", "ff_per_bit", "lut_base", "lut_per_bit",
                           "bram_block_bits", "bram_min_reuse"});
    read(k, "dsp_input_width", c.cost.dsp_input_width, "cost");
    read(k, "ff_base", c.cost.ff_base, "cost");
    read(k, "ff_per_bit", c.cost.ff_per_bit, "cost");
    read(k, "lut_base", c.cost.lut_base, "cost");
    read(k, "lut_per_bit", c.cost.lut_per_bit, "cost");
    read(k, "bram_block_bits", c.cost.bram_block_bits, "cost");
    read(k, "bram_min_reuse", c.cost.bram_min_reuse, "cost");
  }
  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    check_keys(s, "sweep", {"frac_bits", "reuse"});
    read(s, "frac_bits", c.sweep_frac_bits, "sweep");
    read(s, "reuse", c.sweep_reuse, "sweep");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), base);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string dump_run_config(const RunConfig& c) {
  ojson j;
  j["model"] = c.model;
  j["data"] = c.data;
  j["out"] = c.out;
  j["trace"] = c.trace;
  j["mode"] = std::string(to_string(c.mode));
  j["seed"] = c.seed;
  j["samples"] = c.samples;
  j["quantization"] = {{"weight", c.quant.weight_format.str()},
                       {"activation", c.quant.activation_format.str()},
                       {"accumulator", c.quant.accumulator_format.str()}};
  j["softmax_variant"] = std::string(to_string(c.quant.softmax));
  const auto& l = c.quant.lut;
  j["lut"] = {{"exp_size", l.exp_size},
              {"exp_lo", l.exp_lo},
              {"exp_hi", l.exp_hi},
              {"reciprocal_size", l.reciprocal_size},
              {"reciprocal_lo", l.reciprocal_lo},
              {"inv_sqrt_size", l.inv_sqrt_size},
              {"inv_sqrt_hi", l.inv_sqrt_hi},
              {"legacy_exp_lo", l.legacy_exp_lo},
              {"legacy_exp_hi", l.legacy_exp_hi},
              {"legacy_reciprocal_lo", l.legacy_reciprocal_lo},
              {"legacy_reciprocal_scale", l.legacy_reciprocal_scale}};
  j["reuse"] = c.reuse.reuse;
  j["layer_reuse"] = ojson::object();
  for (const auto& [layer, r] : c.reuse.layer_reuse) j["layer_reuse"][std::to_string(layer)] = r;
  j["clock_period_ns"] = c.reuse.clock_period_ns;
  j["fifo_depth"] = c.fifo_depth;
  j["cost"] = {{"dsp_input_width", c.cost.dsp_input_width},
               {"ff_base", c.cost.ff_base},
               {"ff_per_bit", c.cost.ff_per_bit},
               {"lut_base", c.cost.lut_base},
               {"lut_per_bit", c.cost.lut_per_bit},
               {"bram_block_bits", c.cost.bram_block_bits},
               {"bram_min_reuse", c.cost.bram_min_reuse}};
  j["sweep"] = {{"frac_bits", c.sweep_frac_bits}, {"reuse", c.sweep_reuse}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Runs and sweeps

Matrix run_float(const ModelGraph& g, const Dataset& d) {
  const std::size_t cols = output_shape(g).cols;
  Matrix y(d.size(), cols);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Matrix out = float_forward(g, d.samples[i]);
    std::copy(out.data.begin(), out.data.end(), y.row(i).begin());
  }
  return y;
}

Matrix run_fixed(const QModel& qm, const Dataset& d) {
  const std::size_t cols = qm.shapes.back().cols;
  Matrix y(d.size(), cols);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Matrix out = fixed_forward(qm, d.samples[i]);
    std::copy(out.data.begin(), out.data.end(), y.row(i).begin());
  }
  return y;
}

std::vector<SweepBitsRow> sweep_bits(const ModelGraph& g, const Dataset& d, const QuantConfig& base,
                                     const std::vector<int>& frac_bits, std::ostream* warn) {
  if (d.size() == 0) throw InputError("sweep-bits needs a nonempty dataset");
  if (frac_bits.empty()) throw InputError("sweep-bits needs at least one fractional width");
  const Matrix ref = run_float(g, d);
  // Binary references score 1.0 against their own decisions; one-vs-rest
  // multi-class references generally do not.
  const double ref_auc = agreement_auc(ref, ref, warn);
  std::vector<SweepBitsRow> rows;
  for (int f : frac_bits) {
    QuantConfig cfg = QuantConfig::with_precision(base.activation_format.integer_bits(), f);
    cfg.softmax = base.softmax;
    cfg.lut = base.lut;
    const Matrix y = run_fixed(quantize_model(g, cfg), d);
    SweepBitsRow r;
    r.frac_bits = f;
    r.raw_auc = agreement_auc(ref, y, warn);
    r.auc = r.raw_auc / ref_auc;
    for (std::size_t k = 0; k < y.data.size(); ++k)
      r.max_abs_err = std::max(r.max_abs_err, std::abs(y.data[k] - ref.data[k]));
    r.agreement = agreement(ref, y);
    rows.push_back(r);
  }
  return rows;
}

std::string sweep_bits_csv(const std::vector<SweepBitsRow>& rows) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "frac_bits,auc,max_abs_err,agreement\n";
  for (const auto& r : rows)
    os << r.frac_bits << ',' << (std::isnan(r.auc) ? std::string("nan") : format_double(r.auc)) << ','
       << format_double(r.max_abs_err) << ',' << format_double(r.agreement) << '\n';
  return os.str();
}

std::vector<SweepReuseRow> sweep_reuse(const QModel& qm, const ReuseConfig& base,
                                       const std::vector<int>& reuses, const ScheduleOptions& opts,
                                       const CostCoefficients& cost) {
  if (reuses.empty()) throw InputError("sweep-reuse needs at least one reuse factor");
  std::vector<SweepReuseRow> rows;
  for (int r : reuses) {
    ReuseConfig rc = base;
    rc.reuse = r;
    rc.layer_reuse.clear();
    try {
      rc.validate();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    const CycleReport rep = simulate_timing(build_schedule(qm, rc, opts));
    SweepReuseRow row;
    row.reuse = r;
    row.interval_cycles = rep.initiation_interval_cycles;
    row.latency_cycles = rep.total_latency_cycles;
    row.latency_us = rep.latency_us;
    row.resources = estimate_resources(qm, rc, cost);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_reuse_csv(const std::vector<SweepReuseRow>& rows) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "reuse,interval_cycles,latency_cycles,latency_us,dsp,ff,lut,bram_bits,bram_blocks\n";
  for (const auto& r : rows)
    os << r.reuse << ',' << r.interval_cycles << ',' << r.latency_cycles << ','
       << format_double(r.latency_us) << ',' << r.resources.dsp << ',' << r.resources.ff << ','
       << r.resources.lut << ',' << r.resources.bram_bits << ',' << r.resources.bram_blocks << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Flags {
  std::string config, model, data, out, trace, mode, softmax;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  int frac = 0, integer = 0, reuse = 0;
  CLI::Option *o_config = nullptr, *o_model = nullptr, *o_data = nullptr, *o_out = nullptr,
              *o_trace = nullptr, *o_mode = nullptr, *o_softmax = nullptr, *o_seed = nullptr,
              *o_samples = nullptr, *o_frac = nullptr, *o_int = nullptr, *o_reuse = nullptr;
};

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (*f.o_config) c = load_run_config(f.config, c);
  if (*f.o_model) c.model = f.model;
  if (*f.o_data) c.data = f.data;
  if (*f.o_out) c.out = f.out;
  if (*f.o_trace) c.trace = f.trace;
  if (*f.o_mode) c.mode = parse_run_mode(f.mode);
  if (*f.o_seed) c.seed = f.seed;
  if (*f.o_samples) c.samples = f.samples;
  if (*f.o_softmax) {
    try {
      c.quant.softmax = parse_softmax_variant(f.softmax);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  if (*f.o_frac || *f.o_int) {
    const int i = *f.o_int ? f.integer : c.quant.activation_format.integer_bits();
    const int fr = *f.o_frac ? f.frac : c.quant.activation_format.frac_bits();
    QuantConfig q = QuantConfig::with_precision(i, fr);
    q.softmax = c.quant.softmax;
    q.lut = c.quant.lut;
    c.quant = q;
  }
  if (*f.o_reuse) {
    c.reuse.reuse = f.reuse;
    c.reuse.layer_reuse.clear();
  }
  try {
    c.quant.validate();
    c.reuse.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return c;
}

ModelGraph require_model(const RunConfig& c) {
  if (c.model.empty()) throw InputError("no model given (--model or config 'model')");
  return load_model(c.model);
}

Dataset dataset_for(const RunConfig& c, const ModelGraph& g) {
  if (!c.data.empty()) return load_dataset_csv(c.data, g);
  return synthetic_dataset(g, c.samples, c.seed);
}

/// Writes to --out when set, else to the command's stdout.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw InputError("cannot write '" + path + "'");
      os_ = file_.get();
    }
    os_->imbue(std::locale::classic());
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

std::uint64_t layer_multiplies(const QModel& qm, std::size_t i) {
  const Shape in = i == 0 ? qm.input_shape() : qm.shapes[i - 1];
  std::uint64_t m = 0;
  for (const auto& s : describe_layer(qm.layers[i], qm.config, in, i)) m += s.multiplies;
  return m;
}

void write_lut_csv(const LutTable& t, std::ostream& os) {
  os << "index,input_midpoint,entry_value\n";
  const auto& fmt = t.spec().entry_format;
  for (std::size_t i = 0; i < t.entries().size(); ++i)
    os << i << ',' << format_double(t.midpoint(i)) << ','
       << format_double(dequantize(FixedScalar{t.entries()[i], fmt})) << '\n';
}

int cmd_inspect(const RunConfig& c, const std::string& lut, std::ostream& out) {
  const ModelGraph g = require_model(c);
  const QModel qm = quantize_model(g, c.quant);
  Sink sink(c.out, out);
  if (!lut.empty()) {
    if (lut == "inv_sqrt") {
      write_lut_csv(LutTable(inv_sqrt_spec(c.quant)), *sink);
      return 0;
    }
    const auto unit = SoftmaxUnit::make(c.quant, g.seq_len);
    if (lut == "exp") write_lut_csv(unit->exp, *sink);
    else if (lut == "reciprocal") write_lut_csv(unit->reciprocal, *sink);
    else throw InputError("unknown table '" + lut + "' (exp|reciprocal|inv_sqrt)");
    return 0;
  }
  const auto shapes = validate(g);
  std::size_t blocks = 0;
  for (const auto& l : g.layers) blocks += std::holds_alternative<MhaLayer>(l) ? 1 : 0;
  std::ostream& os = *sink;
  os << "model: " << g.name << '\n'
     << "input: " << g.seq_len << " x " << g.input_dim << '\n'
     << "parameters: " << count_parameters(g) << '\n'
     << "transformer blocks: " << blocks << '\n'
     << "formats: weight " << c.quant.weight_format.str() << ", activation "
     << c.quant.activation_format.str() << ", accumulator " << c.quant.accumulator_format.str() << '\n'
     << "softmax: " << to_string(c.quant.softmax) << "\n\n";
  os << std::left << std::setw(6) << "layer" << std::setw(16) << "kind" << std::setw(12) << "output"
     << std::right << std::setw(10) << "params" << std::setw(12) << "mults/row" << '\n';
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    std::string detail(layer_kind(g.layers[i]));
    if (const auto* m = std::get_if<MhaLayer>(&g.layers[i]))
      detail += " h" + std::to_string(m->heads) + " dk" + std::to_string(m->d_k);
    else if (const auto* d = std::get_if<DenseLayer>(&g.layers[i]))
      detail += " " + std::string(to_string(d->activation));
    else if (const auto* r = std::get_if<ResidualAddLayer>(&g.layers[i]))
      detail += " " + std::to_string(r->source);
    const std::string shape = std::to_string(shapes[i].rows) + "x" + std::to_string(shapes[i].cols);
    os << std::left << std::setw(6) << i << std::setw(16) << detail.substr(0, 15) << std::setw(12) << shape
       << std::right << std::setw(10) << count_parameters(g.layers[i]) << std::setw(12)
       << layer_multiplies(qm, i) << '\n';
  }
  return 0;
}

int cmd_run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const ModelGraph g = require_model(c);
  const Dataset d = dataset_for(c, g);
  if (d.size() == 0) throw InputError("dataset is empty");
  Matrix y;
  std::optional<CycleReport> report;
  if (c.mode == RunMode::float_ref) {
    y = run_float(g, d);
  } else {
    const QModel qm = quantize_model(g, c.quant);
    if (c.mode == RunMode::fixed) {
      y = run_fixed(qm, d);
    } else {
      ScheduleOptions opts;
      opts.fifo_depth = c.fifo_depth;
      const PipelineSchedule sched = build_schedule(qm, c.reuse, opts);
      y = Matrix(d.size(), qm.shapes.back().cols);
      std::unique_ptr<std::ofstream> trace;
      for (std::size_t i = 0; i < d.size(); ++i) {
        SimOptions so;
        if (i == 0 && !c.trace.empty()) {
          trace = std::make_unique<std::ofstream>(c.trace);
          if (!*trace) throw InputError("cannot write trace '" + c.trace + "'");
          trace->imbue(std::locale::classic());
          so.trace = trace.get();
        }
        SimResult r = simulate(sched, quantize_input(qm, d.samples[i]), so);
        const auto vals = r.output.to_real();
        std::copy(vals.begin(), vals.end(), y.row(i).begin());
        if (i == 0) report = r.report;
      }
    }
  }
  Sink sink(c.out, out);
  std::ostream& os = *sink;
  os << "sample";
  for (std::size_t k = 0; k < y.cols; ++k) os << ",y" << k;
  os << ",prediction,label\n";
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.rows; ++i) {
    os << i;
    for (double v : y.row(i)) os << ',' << format_double(v);
    const int p = decide(y.row(i));
    correct += p == d.labels[i] ? 1 : 0;
    os << ',' << p << ',' << d.labels[i] << '\n';
  }
  std::ostringstream summary;
  summary.imbue(std::locale::classic());
  summary << "mode: " << to_string(c.mode) << '\n'
          << "samples: " << y.rows << '\n'
          << "accuracy: " << format_double(static_cast<double>(correct) / static_cast<double>(y.rows)) << '\n';
  const double a = output_auc(y, d.labels, &err);
  summary << "auc: " << (std::isnan(a) ? std::string("nan") : format_double(a)) << '\n';
  if (report) summary << '\n' << report->to_table();
  out << summary.str();
  return 0;
}

int cmd_sweep_bits(const RunConfig& c, const std::vector<int>& fracs, std::ostream& out,
                   std::ostream& err) {
  const ModelGraph g = require_model(c);
  const Dataset d = dataset_for(c, g);
  const auto rows = sweep_bits(g, d, c.quant, fracs.empty() ? c.sweep_frac_bits : fracs, &err);
  Sink sink(c.out, out);
  *sink << sweep_bits_csv(rows);
  return 0;
}

int cmd_sweep_reuse(const RunConfig& c, const std::vector<int>& reuses, std::ostream& out) {
  const ModelGraph g = require_model(c);
  const QModel qm = quantize_model(g, c.quant);
  ScheduleOptions opts;
  opts.fifo_depth = c.fifo_depth;
  const auto rows = sweep_reuse(qm, c.reuse, reuses.empty() ? c.sweep_reuse : reuses, opts, c.cost);
  Sink sink(c.out, out);
  *sink << sweep_reuse_csv(rows);
  return 0;
}

int cmd_estimate(const RunConfig& c, const std::string& format, std::ostream& out) {
  const ModelGraph g = require_model(c);
  const QModel qm = quantize_model(g, c.quant);
  const ResourceReport r = estimate_resources(qm, c.reuse, c.cost);
  Sink sink(c.out, out);
  if (format == "json") *sink << r.to_json();
  else if (format == "csv") *sink << r.to_csv();
  else if (format == "table") *sink << r.to_table();
  else throw InputError("unknown format '" + format + "' (table|json|csv)");
  return 0;
}

int cmd_make_examples(const RunConfig& c, const std::string& dir, bool with_data, std::ostream& out) {
  std::filesystem::create_directories(dir);
  const ExampleModels ex = build_example_models();
  for (const ModelGraph* g : {&ex.engine, &ex.btag, &ex.gw}) {
    const auto path = std::filesystem::path(dir) / (g->name + ".json");
    save_model(*g, path);
    out << "wrote " << path.string() << '\n';
    if (with_data) {
      const auto dpath = std::filesystem::path(dir) / (g->name + "_data.csv");
      std::ofstream os(dpath);
      if (!os) throw InputError("cannot write '" + dpath.string() + "'");
      os.imbue(std::locale::classic());
      write_dataset_csv(synthetic_dataset(*g, c.samples, c.seed), os);
      out << "wrote " << dpath.string() << '\n';
    }
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fxformer: fixed-point transformer inference and FPGA dataflow modelling", "fxformer"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  f.o_config = app.add_option("--config", f.config, "JSON run config");
  f.o_model = app.add_option("--model", f.model, "model JSON");
  f.o_data = app.add_option("--data", f.data, "dataset CSV (default: synthetic)");
  f.o_out = app.add_option("--out", f.out, "output file (default: stdout)");
  f.o_seed = app.add_option("--seed", f.seed, "seed for synthetic data");
  f.o_samples = app.add_option("--samples", f.samples, "synthetic dataset size");
  f.o_mode = app.add_option("--mode", f.mode, "float|fixed|sim");
  f.o_frac = app.add_option("--frac", f.frac, "fractional bits for all tensors");
  f.o_int = app.add_option("--int", f.integer, "integer bits (with sign) for weights and activations");
  f.o_reuse = app.add_option("--reuse", f.reuse, "reuse factor (power of two)");
  f.o_softmax = app.add_option("--softmax", f.softmax, "restructured|legacy");
  f.o_trace = app.add_option("--trace", f.trace, "per-cycle FIFO occupancy CSV (sim mode)");

  auto* inspect = app.add_subcommand("inspect", "layer table, shapes, parameter and multiply counts");
  std::string lut;
  inspect->add_option("--lut", lut, "dump a table as CSV: exp|reciprocal|inv_sqrt");
  auto* run = app.add_subcommand("run", "run a dataset through the float, fixed or simulated model");
  auto* sbits = app.add_subcommand("sweep-bits", "agreement metrics across fractional widths");
  std::vector<int> frac_list;
  sbits->add_option("--frac-list", frac_list, "fractional widths, comma separated")->delimiter(',');
  auto* sreuse = app.add_subcommand("sweep-reuse", "latency and resources across reuse factors");
  std::vector<int> reuse_list;
  sreuse->add_option("--reuse-list", reuse_list, "reuse factors, comma separated")->delimiter(',');
  auto* estimate = app.add_subcommand("estimate", "per-layer resource estimate");
  std::string est_format = "table";
  estimate->add_option("--format", est_format, "table|json|csv");
  auto* make = app.add_subcommand("make-examples", "write the example models");
  std::string out_dir = "models";
  bool with_data = false;
  make->add_option("--dir", out_dir, "output directory");
  make->add_flag("--with-data", with_data, "also write synthetic datasets");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig c = resolve(f);
    if (*inspect) return cmd_inspect(c, lut, out);
    if (*run) return cmd_run(c, out, err);
    if (*sbits) return cmd_sweep_bits(c, frac_list, out, err);
    if (*sreuse) return cmd_sweep_reuse(c, reuse_list, out);
    if (*estimate) return cmd_estimate(c, est_format, out);
    if (*make) return cmd_make_examples(c, out_dir, with_data, out);
    err << "error: no command\n";
    return 2;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DeadlockError& e) {
    err << "deadlock: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace fxformer
