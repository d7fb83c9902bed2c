// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include "fxformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "fxformer/error.hpp"

namespace fxformer {

double auc(std::span<const double> scores, std::span<const int> labels, std::ostream* warn) {
  if (scores.size() != labels.size()) throw InputError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InputError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    if (warn) *warn << "warning: AUC undefined, only one class present among " << n << " samples\n";
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks over tie groups.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double macro_auc(const Matrix& scores, std::span<const int> labels, std::ostream* warn) {
  if (scores.rows != labels.size()) throw InputError("macro_auc: scores and labels differ in length");
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> col(scores.rows);
  std::vector<int> bin(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    for (std::size_t i = 0; i < scores.rows; ++i) {
      col[i] = scores(i, c);
      bin[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    const double a = auc(col, bin);
    if (std::isnan(a)) {
      if (warn) *warn << "warning: class " << c << " skipped in macro AUC, one-sided labels\n";
      continue;
    }
    sum += a;
    ++used;
  }
  if (used == 0) {
    if (warn) *warn << "warning: macro AUC undefined, no class has both labels\n";
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sum / static_cast<double>(used);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw InputError("argmax of empty row");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

int decide(std::span<const double> row) {
  if (row.size() == 1) return row[0] >= 0.5 ? 1 : 0;
  return static_cast<int>(argmax(row));
}

double agreement(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InputError("agreement: output shapes differ");
  if (a.rows == 0) throw InputError("agreement: no samples");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.rows; ++i) same += decide(a.row(i)) == decide(b.row(i)) ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.rows);
}

double output_auc(const Matrix& scores, std::span<const int> labels, std::ostream* warn) {
  if (scores.rows != labels.size()) throw InputError("output_auc: scores and labels differ in length");
  if (scores.cols <= 2) {
    const std::size_t c = scores.cols - 1;
    std::vector<double> s(scores.rows);
    for (std::size_t i = 0; i < scores.rows; ++i) s[i] = scores(i, c);
    return auc(s, labels, warn);
  }
  return macro_auc(scores, labels, warn);
}

double agreement_auc(const Matrix& reference, const Matrix& scores, std::ostream* warn) {
  if (reference.rows != scores.rows || reference.cols != scores.cols)
    throw InputError("agreement_auc: output shapes differ");
  std::vector<int> labels(reference.rows);
  for (std::size_t i = 0; i < reference.rows; ++i) labels[i] = decide(reference.row(i));
  return output_auc(scores, labels, warn);
}

}  // namespace fxformer
