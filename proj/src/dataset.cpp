// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string_view>

#include "fxformer/error.hpp"
#include "fxformer/rng.hpp"

namespace fxformer {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

int model_classes(const ModelGraph& g) {
  const Shape out = output_shape(g);
  return out.cols == 1 ? 2 : static_cast<int>(out.cols);
}

Dataset read_dataset_csv(std::istream& in, const ModelGraph& g, const std::string& source) {
  Dataset d;
  d.seq_len = static_cast<std::size_t>(g.seq_len);
  d.input_dim = static_cast<std::size_t>(g.input_dim);
  const std::size_t nfeat = d.seq_len * d.input_dim;
  const int classes = model_classes(g);

  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw InputError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(in, line)) throw InputError(source + ": empty dataset file");
  ++lineno;
  const auto header = split(line);
  if (header.size() != nfeat + 1)
    fail("header has " + std::to_string(header.size()) + " columns, model expects " +
         std::to_string(nfeat + 1));
  for (std::size_t t = 0, k = 0; t < d.seq_len; ++t)
    for (std::size_t f = 0; f < d.input_dim; ++f, ++k) {
      const std::string want = "t" + std::to_string(t) + "_f" + std::to_string(f);
      if (trim(header[k]) != want) fail("column " + std::to_string(k) + " is '" + std::string(trim(header[k])) + "', expected '" + want + "'");
    }
  if (trim(header.back()) != "label") fail("last column must be 'label'");

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != nfeat + 1)
      fail("row has " + std::to_string(cells.size()) + " columns, expected " + std::to_string(nfeat + 1));
    Matrix x(d.seq_len, d.input_dim);
    for (std::size_t k = 0; k < nfeat; ++k) {
      const auto cell = trim(cells[k]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        fail("bad number '" + std::string(cell) + "' in column " + std::to_string(k));
      x.data[k] = v;
    }
    const auto lc = trim(cells.back());
    int label = -1;
    const auto [ptr, ec] = std::from_chars(lc.data(), lc.data() + lc.size(), label);
    if (ec != std::errc() || ptr != lc.data() + lc.size() || label < 0 || label >= classes)
      fail("label '" + std::string(lc) + "' outside [0, " + std::to_string(classes) + ")");
    d.samples.push_back(std::move(x));
    d.labels.push_back(label);
  }
  return d;
}

Dataset load_dataset_csv(const std::filesystem::path& path, const ModelGraph& g) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  return read_dataset_csv(in, g, path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvariantError("format_double failed");
  return std::string(buf, ptr);
}

void write_dataset_csv(const Dataset& d, std::ostream& out) {
  for (std::size_t t = 0; t < d.seq_len; ++t)
    for (std::size_t f = 0; f < d.input_dim; ++f) out << 't' << t << "_f" << f << ',';
  out << "label\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.samples[i].data) out << format_double(v) << ',';
    out << d.labels[i] << '\n';
  }
}

Dataset synthetic_dataset(const ModelGraph& g, std::size_t n, std::uint64_t seed) {
  validate(g);
  Dataset d;
  d.seq_len = static_cast<std::size_t>(g.seq_len);
  d.input_dim = static_cast<std::size_t>(g.input_dim);
  const int classes = model_classes(g);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.integer(0, classes - 1);
    const double amp = 1.0 + 0.2 * rng.normal();
    const double jitter = 0.3 * rng.normal();
    const double level = 0.8 * (label - 0.5 * (classes - 1)) + 0.3 * rng.normal();
    Matrix x(d.seq_len, d.input_dim);
    for (std::size_t t = 0; t < d.seq_len; ++t)
      for (std::size_t f = 0; f < d.input_dim; ++f) {
        const double phase = jitter + 0.7 * static_cast<double>(f);
        const double w = 2.0 * std::numbers::pi * (label + 1) * static_cast<double>(t) /
                         static_cast<double>(d.seq_len);
        x(t, f) = level + amp * std::sin(w + phase) + 0.3 * rng.normal();
      }
    d.samples.push_back(std::move(x));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace fxformer
