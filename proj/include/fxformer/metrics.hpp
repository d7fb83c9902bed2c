// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fxformer/model.hpp"

namespace fxformer {

/// Rank-based ROC AUC (Mann-Whitney U), ties counted as one half.
/// Returns NaN when either class is absent; `warn`, if given, gets a note.
double auc(std::span<const double> scores, std::span<const int> labels, std::ostream* warn = nullptr);

/// Mean one-vs-rest AUC over classes that have both positives and negatives.
/// `scores` is [n x classes]. NaN when no class qualifies.
double macro_auc(const Matrix& scores, std::span<const int> labels, std::ostream* warn = nullptr);

std::size_t argmax(std::span<const double> v);

/// Class decision of one model output row: threshold 0.5 for a single
/// sigmoid column, argmax otherwise.
int decide(std::span<const double> output_row);

/// Fraction of rows whose decisions match.
double agreement(const Matrix& a, const Matrix& b);

/// AUC of model outputs against class labels: the sigmoid column or the
/// positive-class column for binary outputs, macro one-vs-rest otherwise.
double output_auc(const Matrix& scores, std::span<const int> labels, std::ostream* warn = nullptr);

/// output_auc of `scores` against the decisions of `reference`.
double agreement_auc(const Matrix& reference, const Matrix& scores, std::ostream* warn = nullptr);

}  // namespace fxformer
