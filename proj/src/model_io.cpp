// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "fxformer/error.hpp"
#include "fxformer/model.hpp"
#include "json.hpp"

namespace fxformer {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class SidecarCache {
 public:
  explicit SidecarCache(fs::path base) : base_(std::move(base)) {}

  std::vector<double> slice(const std::string& file, std::size_t offset, std::size_t len) {
    const auto& all = load(file);
    if (offset + len > all.size())
      throw InputError("weights_file '" + file + "' has " + std::to_string(all.size()) +
                       " values, reference needs [" + std::to_string(offset) + ", " +
                       std::to_string(offset + len) + ")");
    return {all.begin() + static_cast<std::ptrdiff_t>(offset),
            all.begin() + static_cast<std::ptrdiff_t>(offset + len)};
  }

 private:
  const std::vector<double>& load(const std::string& file) {
    auto it = cache_.find(file);
    if (it != cache_.end()) return it->second;
    const fs::path p = base_ / file;
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open weights_file '" + p.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 8 != 0)
      throw InputError("weights_file '" + p.string() + "' is not a whole number of float64 values");
    std::vector<double> vals(bytes.size() / 8);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b) u = (u << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
      vals[i] = std::bit_cast<double>(u);
    }
    return cache_.emplace(file, std::move(vals)).first->second;
  }

  fs::path base_;
  std::map<std::string, std::vector<double>> cache_;
};

struct Reader {
  SidecarCache& sidecar;
  std::string where;

  const json& field(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end()) throw InputError(where + ": missing field '" + key + "'");
    return *it;
  }

  int integer(const json& obj, const char* key) const {
    const json& v = field(obj, key);
    if (!v.is_number_integer()) throw InputError(where + ": field '" + key + "' must be an integer");
    return v.get<int>();
  }

  std::vector<double> weights(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end()) throw InputError(where + ": missing weight array '" + key + "'");
    return array(*it, key);
  }

  std::vector<double> array(const json& v, const std::string& key) const {
    if (v.is_object()) {
      if (!v.contains("weights_file"))
        throw InputError(where + ": weight reference '" + key + "' lacks weights_file");
      const auto file = v.at("weights_file").get<std::string>();
      const auto offset = v.value("offset", std::size_t{0});
      if (!v.contains("len")) throw InputError(where + ": weight reference '" + key + "' lacks len");
      return sidecar.slice(file, offset, v.at("len").get<std::size_t>());
    }
    if (!v.is_array()) throw InputError(where + ": weight array '" + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number()) throw InputError(where + ": weight array '" + key + "' has a non-number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::vector<double>> per_head(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end()) throw InputError(where + ": missing weight array '" + key + "'");
    if (!it->is_array()) throw InputError(where + ": '" + key + "' must be an array of per-head arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t h = 0; h < it->size(); ++h)
      out.push_back(array((*it)[h], std::string(key) + "[" + std::to_string(h) + "]"));
    return out;
  }
};

LayerSpec parse_layer(const json& j, std::size_t index, int in_cols, SidecarCache& sidecar) {
  Reader rd{sidecar, "layer " + std::to_string(index)};
  if (!j.is_object()) throw InputError(rd.where + ": layer must be an object");
  const auto kind = rd.field(j, "kind").get<std::string>();
  rd.where += " (" + kind + ")";
  if (kind == "dense") {
    DenseLayer d;
    d.units = rd.integer(j, "units");
    d.in = j.contains("in") ? rd.integer(j, "in") : in_cols;
    d.activation = parse_activation(j.value("activation", std::string("none")));
    d.weights = rd.weights(j, "W");
    d.bias = rd.weights(j, "b");
    return d;
  }
  if (kind == "mha") {
    MhaLayer m;
    m.heads = rd.integer(j, "heads");
    m.d_model = rd.integer(j, "d_model");
    m.d_k = rd.integer(j, "d_k");
    m.w_q = rd.per_head(j, "W_q");
    m.w_k = rd.per_head(j, "W_k");
    m.w_v = rd.per_head(j, "W_v");
    m.w_o = rd.weights(j, "W_o");
    m.b_o = rd.weights(j, "b_o");
    return m;
  }
  if (kind == "layernorm") {
    LayerNormLayer n;
    n.gamma = rd.weights(j, "gamma");
    n.beta = rd.weights(j, "beta");
    n.dim = j.contains("dim") ? rd.integer(j, "dim") : static_cast<int>(n.gamma.size());
    return n;
  }
  if (kind == "residual_add") return ResidualAddLayer{rd.integer(j, "source")};
  if (kind == "pool_over_time") {
    const auto mode = j.value("mode", std::string("mean"));
    if (mode != "mean") throw InputError(rd.where + ": unsupported pooling mode '" + mode + "'");
    return PoolOverTimeLayer{};
  }
  throw InputError("layer " + std::to_string(index) + ": unknown layer kind '" + kind + "'");
}

int out_cols(const LayerSpec& layer, int in_cols) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->units;
  return in_cols;
}

json to_json(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const DenseLayer& d) {
                          return json{{"kind", "dense"},
                                      {"in", d.in},
                                      {"units", d.units},
                                      {"activation", std::string(to_string(d.activation))},
                                      {"W", d.weights},
                                      {"b", d.bias}};
                        },
                        [](const MhaLayer& m) {
                          return json{{"kind", "mha"}, {"heads", m.heads}, {"d_model", m.d_model},
                                      {"d_k", m.d_k},   {"W_q", m.w_q},     {"W_k", m.w_k},
                                      {"W_v", m.w_v},   {"W_o", m.w_o},     {"b_o", m.b_o}};
                        },
                        [](const LayerNormLayer& n) {
                          return json{{"kind", "layernorm"}, {"dim", n.dim}, {"gamma", n.gamma},
                                      {"beta", n.beta}};
                        },
                        [](const ResidualAddLayer& r) {
                          return json{{"kind", "residual_add"}, {"source", r.source}};
                        },
                        [](const PoolOverTimeLayer&) {
                          return json{{"kind", "pool_over_time"}, {"mode", "mean"}};
                        },
                    },
                    layer);
}

}  // namespace

ModelGraph parse_model(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError("model JSON parse error at " + line_col(text, e.byte) + ": " + e.what());
  }
  try {
    if (!j.is_object()) throw InputError("model JSON must be an object");
    SidecarCache sidecar(base_dir);
    Reader rd{sidecar, "model"};
    ModelGraph g;
    g.name = j.value("name", std::string("model"));
    g.seq_len = rd.integer(j, "seq_len");
    g.input_dim = rd.integer(j, "input_dim");
    const json& layers = rd.field(j, "layers");
    if (!layers.is_array()) throw InputError("model: 'layers' must be an array");
    int cols = g.input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      g.layers.push_back(parse_layer(layers[i], i, cols, sidecar));
      cols = out_cols(g.layers.back(), cols);
    }
    validate(g);
    return g;
  } catch (const json::exception& e) {
    throw InputError(std::string("model JSON schema error: ") + e.what());
  }
}

ModelGraph load_model(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("model file not found: '" + path.string() + "'");
  return parse_model(read_text(path), path.parent_path());
}

std::string dump_model(const ModelGraph& g) {
  // nlohmann::json orders object keys, so the dump is canonical.
  json j{{"name", g.name}, {"seq_len", g.seq_len}, {"input_dim", g.input_dim}, {"layers", json::array()}};
  for (const auto& layer : g.layers) j["layers"].push_back(to_json(layer));
  return j.dump(1) + "\n";
}

void save_model(const ModelGraph& g, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file '" + path.string() + "'");
  out << dump_model(g);
}

}  // namespace fxformer
