// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

// Runs every acceptance criterion at its stated tolerance and time limit and
// prints one PASS/FAIL line per criterion. Exit status is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fxformer/cli.hpp"
#include "fxformer/cost.hpp"
#include "fxformer/dataflow.hpp"
#include "fxformer/metrics.hpp"
#include "fxformer/stream.hpp"
#include "../unit/test_util.hpp"

using namespace fxformer;
using namespace fxformer::testing;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

std::string model_path(const std::string& name) { return (source_dir() / "models" / (name + ".json")).string(); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Check criterion1() {
  Check c;
  const FixedFormat f = FixedFormat::parse("ufixed<7,4>");
  c.expect(f.min() == 0.0 && f.max() == 15.875 && f.step() == 0.125, "ufixed<7,4> range");
  for (std::int64_t raw = 0; raw < 128; ++raw) {
    const FixedScalar v{raw, f};
    c.expect(dequantize(v) == static_cast<double>(raw) * 0.125, "value of raw " + std::to_string(raw));
    c.expect(quantize(dequantize(v), f) == v, "round trip of raw " + std::to_string(raw));
  }
  c.detail = c.ok ? "min 0, max 15.875, step 0.125, 128/128 round trips" : c.detail;
  return c;
}

Check criterion2() {
  Check c;
  const int k = 10;
  const QuantConfig cfg;
  QuantConfig lcfg = cfg;
  lcfg.softmax = SoftmaxVariant::legacy;
  const auto u = SoftmaxUnit::make(cfg, k);
  const auto ul = SoftmaxUnit::make(lcfg, k);
  const double agree_tol = 2 * std::max(u->lut_error_bound(), ul->lut_error_bound());
  Rng rng(2);
  double worst_gap = 0.0, worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const QTensor z = QTensor::from_real({1, k}, random_vec(rng, k, 4.0), cfg.activation_format);
    OpCounter a, b;
    const auto ya = softmax_restructured(z, *u, &a).to_real();
    const auto yb = softmax_legacy(z, *ul, &b).to_real();
    c.expect(a.exp_lookups == 10, "restructured exp lookups " + std::to_string(a.exp_lookups));
    c.expect(b.exp_lookups == 100, "legacy exp lookups " + std::to_string(b.exp_lookups));
    const double gap = max_abs_diff(ya, yb);
    worst_gap = std::max(worst_gap, gap);
    for (const auto* y : {&ya, &yb}) {
      const double bound = y == &ya ? u->lut_error_bound() : ul->lut_error_bound();
      const double s = std::accumulate(y->begin(), y->end(), 0.0);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      c.expect(std::abs(s - 1.0) <= k * (cfg.activation_format.step() + bound), "output sum " + fmt(s));
    }
  }
  c.expect(worst_gap <= agree_tol, "variant gap " + fmt(worst_gap) + " > " + fmt(agree_tol));
  if (c.ok)
    c.detail = "exp lookups 10 vs 100; variant gap " + fmt(worst_gap) + " <= " + fmt(agree_tol) +
               "; worst |sum-1| " + fmt(worst_sum);
  return c;
}

Check criterion3() {
  Check c;
  Rng rng(3);
  std::size_t instances = 0;
  auto check_model = [&](const QModel& qm, const QTensor& x) {
    const auto all = fixed_forward_all(qm, x);
    for (std::size_t i = 0; i < qm.layers.size(); ++i) {
      const QTensor& in = i == 0 ? x : all[i - 1];
      if (const auto* m = std::get_if<QMha>(&qm.layers[i]))
        c.expect(mha_q_stream(in, *m, qm.config) == all[i], "MHA stream layer " + std::to_string(i));
      if (const auto* n = std::get_if<QLayerNorm>(&qm.layers[i]))
        c.expect(layernorm_stream(in, *n, qm.config) == all[i], "layernorm stream layer " + std::to_string(i));
      if (const auto* d = std::get_if<QDense>(&qm.layers[i]); d && d->activation == Activation::softmax) {
        const QTensor z = dense_q(in, QDense{d->in, d->units, Activation::none, d->weights_t, d->bias, nullptr},
                                  qm.config);
        c.expect(softmax_stream(z, *d->softmax, qm.config) == all[i], "softmax stream layer " + std::to_string(i));
      }
    }
    c.expect(stream_forward(qm, x) == all.back(), "stream_forward");
    for (int r : {1, 2, 4}) {
      ReuseConfig rc;
      rc.reuse = r;
      c.expect(simulate(build_schedule(qm, rc), x).output == all.back(), "simulate at R=" + std::to_string(r));
    }
    ++instances;
  };
  for (int t = 0; t < 200; ++t) {
    const ModelGraph g = random_model(rng);
    QuantConfig cfg = QuantConfig::with_precision(rng.integer(4, 8), rng.integer(6, 16));
    if (rng.uniform() < 0.3) cfg.softmax = SoftmaxVariant::legacy;
    const QModel qm = quantize_model(g, cfg);
    check_model(qm, quantize_input(qm, random_input(rng, g.input_shape().rows, g.input_shape().cols, 2.0)));
    // Standalone softmax over a random matrix of the same size bound.
    const int rows = rng.integer(1, 8), k = rng.integer(1, 8);
    const QTensor z = QTensor::from_real({static_cast<std::size_t>(rows), static_cast<std::size_t>(k)},
                                         random_vec(rng, static_cast<std::size_t>(rows * k), 4.0),
                                         cfg.activation_format);
    const auto u = SoftmaxUnit::make(cfg, k);
    c.expect(softmax_stream(z, *u, cfg) == softmax_q(z, cfg), "standalone softmax");
  }
  for (const char* name : {"engine", "btag", "gw"}) {
    const ModelGraph g = load_model(model_path(name));
    const QModel qm = quantize_model(g, QuantConfig{});
    check_model(qm, quantize_input(qm, random_input(rng, g.input_shape().rows, g.input_shape().cols)));
  }
  if (c.ok) c.detail = std::to_string(instances) + " instances bit-exact (stream and simulate at R=1,2,4)";
  return c;
}

Check criterion4() {
  Check c;
  Rng rng(4);
  double worst_mu = 0.0, worst_var = 0.0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t d = static_cast<std::size_t>(rng.integer(2, 64));
    const auto x = random_vec(rng, d, rng.uniform(0.01, 100.0));
    const std::vector<double> ones(d, 1.0), zeros(d, 0.0);
    std::vector<double> y(d);
    reference::layernorm_row(x, ones, zeros, y);
    const double mu = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(d);
    double var = 0.0;
    for (double v : y) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    worst_mu = std::max(worst_mu, std::abs(mu));
    worst_var = std::max(worst_var, std::abs(var - 1.0));
  }
  c.expect(worst_mu < 1e-9, "float mean " + fmt(worst_mu));
  c.expect(worst_var < 1e-9, "float variance " + fmt(worst_var));

  double worst_ratio = 0.0;
  std::size_t bounded = 0, unresolved = 0;
  for (int frac : {16, 18, 20, 24}) {
    for (int table : {1024, 1 << 16}) {
      QuantConfig cfg = QuantConfig::with_precision(6, frac);
      cfg.lut.inv_sqrt_size = table;
      for (int t = 0; t < 200; ++t) {
        const int d = rng.integer(2, 32);
        const auto q = std::get<QLayerNorm>(quantize_layer(random_layernorm(rng, d), cfg, 1));
        const QTensor x = QTensor::from_real({1, static_cast<std::size_t>(d)},
                                             random_vec(rng, static_cast<std::size_t>(d), rng.uniform(0.5, 3.0)),
                                             cfg.activation_format);
        const auto xr = x.to_real();
        std::vector<double> g(xr.size()), b(xr.size()), ref(xr.size());
        for (std::size_t j = 0; j < xr.size(); ++j) {
          g[j] = to_real(q.gamma[j], cfg.weight_format);
          b[j] = to_real(q.beta[j], cfg.weight_format);
        }
        reference::layernorm_row(xr, g, b, ref);
        const double bound = layernorm_error_bound(xr, q, cfg);
        const double err = max_abs_diff(layernorm_q(x, q, cfg).to_real(), ref);
        c.expect(err <= bound, "fixed layernorm error " + fmt(err) + " > bound " + fmt(bound));
        // The bound is finite once the variance clears a few table cells.
        const double mean = std::accumulate(xr.begin(), xr.end(), 0.0) / static_cast<double>(d);
        double var = 0.0;
        for (double v : xr) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double cell = q.inv_sqrt->spec().cell_width();
        if (var >= 4 * cell) c.expect(std::isfinite(bound), "unbounded row at variance " + fmt(var));
        if (std::isfinite(bound)) {
          ++bounded;
          worst_ratio = std::max(worst_ratio, err / bound);
        } else {
          ++unresolved;
        }
      }
    }
  }
  if (c.ok)
    c.detail = "float |mu| " + fmt(worst_mu) + ", |var-1| " + fmt(worst_var) + "; fixed error/bound <= " +
               fmt(worst_ratio) + " on " + std::to_string(bounded) + " rows, " + std::to_string(unresolved) +
               " rows below table resolution";
  return c;
}

Check criterion5_model(const std::string& name) {
  Check c;
  std::ostringstream out, err;
  const int rc = run_cli({"sweep-bits", "--model", model_path(name)}, out, err);
  c.expect(rc == 0, "sweep-bits exit " + std::to_string(rc) + ": " + err.str());
  if (!c.ok) return c;
  const auto rows = parse_csv(out.str());
  double err6 = -1, err16 = -1, auc16 = -1, agree16 = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int f = std::stoi(rows[i][0]);
    if (f == 6) err6 = std::stod(rows[i][2]);
    if (f == 16) {
      auc16 = std::stod(rows[i][1]);
      err16 = std::stod(rows[i][2]);
      agree16 = std::stod(rows[i][3]);
    }
  }
  c.expect(agree16 >= 0.99, "agreement at 16 bits " + fmt(agree16));
  c.expect(auc16 >= 0.99, "agreement AUC at 16 bits " + fmt(auc16));
  c.expect(err16 >= 0 && err6 >= 0 && err16 <= err6, "max error 16 bits " + fmt(err16) + " vs 6 bits " + fmt(err6));
  if (c.ok)
    c.detail = name + ": agreement " + fmt(agree16) + ", AUC " + fmt(auc16) + ", err16 " + fmt(err16) +
               " <= err6 " + fmt(err6);
  return c;
}

Check criterion6_model(const std::string& name) {
  Check c;
  std::ostringstream out, err;
  const int rc = run_cli({"sweep-reuse", "--model", model_path(name), "--reuse-list", "1,2,4"}, out, err);
  c.expect(rc == 0, "sweep-reuse exit " + std::to_string(rc) + ": " + err.str());
  if (!c.ok) return c;
  const auto rows = parse_csv(out.str());
  c.expect(rows.size() == 4, "row count");
  if (!c.ok) return c;
  std::string summary;
  for (std::size_t i = 2; i < rows.size(); ++i) {
    c.expect(std::stoull(rows[i][1]) > std::stoull(rows[i - 1][1]), "interval not increasing");
    c.expect(std::stoull(rows[i][2]) > std::stoull(rows[i - 1][2]), "latency not increasing");
    c.expect(std::stoull(rows[i][4]) < std::stoull(rows[i - 1][4]), "DSP not decreasing");
  }
  const QModel qm = quantize_model(load_model(model_path(name)), QuantConfig{});
  std::vector<PipelineSchedule> s;
  for (int r : {1, 2, 4}) {
    ReuseConfig rc2;
    rc2.reuse = r;
    s.push_back(build_schedule(qm, rc2));
  }
  std::size_t mul = 0;
  for (std::size_t i = 0; i < s[0].stages.size(); ++i) {
    if (s[0].stages[i].info.multiplies == 0) continue;
    ++mul;
    c.expect(s[1].stages[i].ii_cycles == 2 * s[0].stages[i].ii_cycles &&
                 s[2].stages[i].ii_cycles == 2 * s[1].stages[i].ii_cycles,
             "II of " + s[0].stages[i].info.name);
  }
  if (c.ok) {
    for (std::size_t i = 1; i < rows.size(); ++i)
      summary += " R" + rows[i][0] + ":" + rows[i][1] + "/" + rows[i][2] + "/" + rows[i][4];
    c.detail = name + " interval/latency/dsp" + summary + "; " + std::to_string(mul) + " multiply stages double II";
  }
  return c;
}

Check criterion7() {
  Check c;
  c.expect(dsp_per_multiply(18) == 1 && dsp_per_multiply(19) == 2, "per-multiply step at 18 bits");
  for (std::uint64_t m : {1u, 16u, 100u, 256u, 4096u})
    for (int r : {1, 2, 4, 8})
      for (int lo : {8, 12, 16, 18})
        for (int hi : {19, 24, 27, 32})
          c.expect(stage_dsp(m, r, hi) == 2 * stage_dsp(m, r, lo), "M=" + std::to_string(m));
  if (c.ok) c.detail = "DSP per multiply 1 -> 2 across 18 bits; stage counts double for all M, R tried";
  return c;
}

Check criterion8() {
  Check c;
  MhaLayer m;
  m.heads = 1;
  m.d_model = 2;
  m.d_k = 2;
  m.w_q = {{0.2, -0.4, 0.7, 0.1}};
  m.w_k = {{-0.3, 0.8, 0.5, 0.6}};
  m.w_v = {{1.1, -0.2, 0.3, 0.9}};
  m.w_o = {0.6, -0.5, 0.4, 1.2};
  m.b_o = {0.05, -0.1};
  ModelGraph g;
  g.seq_len = 3;
  g.input_dim = 2;
  g.layers.emplace_back(m);
  const Matrix x(3, 2, {0.5, -1.0, 1.5, 0.25, -0.75, 2.0});
  // From tests/oracles/mha_oracle.py (direct numpy matrix arithmetic).
  const std::vector<double> oracle{0.3617033478461013, -0.5920935286068125, 0.4640732933685229,
                                   0.3863874435792508, 0.6886636481077438, 1.219772127897116};
  const Matrix y = float_forward(g, x);
  const double diff = max_abs_diff(y.data, oracle);
  c.expect(diff <= 1e-12, "max difference " + fmt(diff));
  if (c.ok) c.detail = "max difference " + fmt(diff);
  return c;
}

Check criterion9() {
  Check c;
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  const double a = auc(s, y);
  c.expect(a == 0.75, "AUC " + fmt(a));
  if (c.ok) c.detail = "AUC 0.75";
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    std::string id;
    double limit_s;
    std::function<Check()> run;
  };
  std::vector<Criterion> all{
      {"1 fixed-point ufixed<7,4>", 1.0, criterion1},
      {"2 softmax complexity", 1.0, criterion2},
      {"3 streaming transparency", 120.0, criterion3},
      {"4 layer-norm moments", 10.0, criterion4},
  };
  for (const char* m : {"engine", "btag", "gw"})
    all.push_back({std::string("5 precision convergence (") + m + ")", 120.0, [m] { return criterion5_model(m); }});
  for (const char* m : {"engine", "btag", "gw"})
    all.push_back({std::string("6 reuse trends (") + m + ")", 60.0, [m] { return criterion6_model(m); }});
  all.push_back({"7 DSP width step", 1.0, criterion7});
  all.push_back({"8 MHA oracle equivalence", 1.0, criterion8});
  all.push_back({"9 AUC metric", 1.0, criterion9});

  int failures = 0;
  for (const auto& cr : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = cr.run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.limit_s) {
      c.ok = false;
      c.detail += " (over time limit " + fmt(cr.limit_s) + " s)";
    }
    failures += c.ok ? 0 : 1;
    std::printf("criterion %-34s %s  %7.3f s  %s\n", cr.id.c_str(), c.ok ? "PASS" : "FAIL", secs, c.detail.c_str());
  }
  std::printf("%s: %d of %zu failed\n", failures ? "FAILED" : "ALL PASSED", failures, all.size());
  return failures;
}
