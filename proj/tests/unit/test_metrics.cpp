// Copyright (c) 2026 The fxformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fxformer/error.hpp"
#include "fxformer/metrics.hpp"
#include "fxformer/rng.hpp"

using namespace fxformer;

namespace {

// Probability that a random positive outscores a random negative, ties 1/2.
double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("AUC hand case") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(s, y) == 0.75);
  CHECK(pair_auc(s, y) == 0.75);
}

TEST_CASE("AUC edge cases") {
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}) == 0.5);
  CHECK(auc(std::vector<double>{1, 2, 3}, std::vector<int>{0, 0, 1}) == 1.0);
  CHECK(auc(std::vector<double>{3, 2, 1}, std::vector<int>{0, 0, 1}) == 0.0);
  std::ostringstream warn;
  CHECK(std::isnan(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}, &warn)));
  CHECK_FALSE(warn.str().empty());
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<int>{1}), InputError);
}

TEST_CASE("AUC matches pair enumeration with heavy ties") {
  Rng rng(61);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(2, 60));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.integer(0, 5) * 0.25;
      y[i] = rng.integer(0, 1);
    }
    y[0] = 0;
    y[1] = 1;
    REQUIRE(auc(s, y) == doctest::Approx(pair_auc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("multi-class helpers") {
  const Matrix p(4, 3, {0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.2, 0.3, 0.5, 0.6, 0.3, 0.1});
  const std::vector<int> y{0, 1, 2, 0};
  CHECK(macro_auc(p, y) == 1.0);
  CHECK(output_auc(p, y) == 1.0);
  CHECK(argmax(std::vector<double>{0.1, 0.5, 0.5}) == 1);
  CHECK(decide(std::vector<double>{0.49}) == 0);
  CHECK(decide(std::vector<double>{0.5}) == 1);
  CHECK(decide(std::vector<double>{0.1, 0.7, 0.2}) == 1);

  // A class with no positives is skipped rather than poisoning the mean.
  std::ostringstream warn;
  const std::vector<int> two{0, 1, 1, 0};
  CHECK(std::isfinite(macro_auc(p, two, &warn)));

  const Matrix q(4, 3, {0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.3, 0.3, 0.4, 0.2, 0.7, 0.1});
  CHECK(agreement(p, q) == 0.75);
  CHECK(agreement(p, p) == 1.0);
  CHECK(agreement_auc(p, p) == 1.0);
}

TEST_CASE("binary single-column outputs") {
  const Matrix s(4, 1, {0.1, 0.4, 0.35, 0.8});
  CHECK(output_auc(s, std::vector<int>{0, 0, 1, 1}) == 0.75);
  const Matrix ref(4, 1, {0.2, 0.3, 0.6, 0.9});
  CHECK(agreement_auc(ref, s) == 0.75);  // reference labels 0,0,1,1
  CHECK(agreement(ref, s) == 0.75);
}
