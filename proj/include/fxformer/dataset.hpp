// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fxformer/model.hpp"

namespace fxformer {

struct Dataset {
  std::size_t seq_len = 0;
  std::size_t input_dim = 0;
  std::vector<Matrix> samples;  // each [seq_len x input_dim]
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }
};

/// Number of classes a model's output encodes; a single column counts as 2.
int model_classes(const ModelGraph& g);

/// CSV with a header row and columns t0_f0..t{S-1}_f{D-1},label. Throws
/// InputError naming the line on shape, number or label problems.
Dataset read_dataset_csv(std::istream& in, const ModelGraph& g, const std::string& source = "<stream>");
Dataset load_dataset_csv(const std::filesystem::path& path, const ModelGraph& g);
void write_dataset_csv(const Dataset& d, std::ostream& out);

/// Seeded class-conditional sinusoids plus Gaussian noise; class c oscillates
/// c + 1 times over the sequence with a per-feature phase around a
/// class-dependent level.
Dataset synthetic_dataset(const ModelGraph& g, std::size_t n, std::uint64_t seed);

/// Locale-independent shortest round-trip formatting.
std::string format_double(double v);

}  // namespace fxformer
