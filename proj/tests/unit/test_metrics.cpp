#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "progeval/error.hpp"
#include "progeval/estimators.hpp"
#include "progeval/metrics.hpp"
#include "progeval/random.hpp"
#include "support/oracles.hpp"

using namespace progeval;
using namespace progeval::testing;


TEST(RocAuc, HandExamples) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.9}, std::vector<int>{0, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0}), 0.5);
}

TEST(RocAuc, SingleClassThrows) {
  try {
    roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingleClass);
  }
}

TEST(RocAuc, MatchesBruteForceOnRandomArrays) {
  Rng rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(12)) / 4.0;  // coarse grid forces ties
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(roc_auc(s, y), brute_auc(s, y));
  }
}

TEST(LogLoss, AnalyticValues) {
  std::vector<double> p(800, 0.125);
  std::vector<int> y(800, 0);
  for (std::size_t i = 0; i < y.size(); i += 8) y[i] = 1;
  const double expected = -(std::log(0.125) + 7 * std::log(0.875)) / 8;
  EXPECT_NEAR(log_loss(p, y), expected, 1e-12);
  EXPECT_NEAR(log_loss(p, y), 0.3767, 5e-4);
  EXPECT_NEAR(brier(p, y), (0.875 * 0.875 + 7 * 0.125 * 0.125) / 8, 1e-12);
  EXPECT_NEAR(brier(p, y), 0.1094, 5e-4);
  EXPECT_NEAR(log_loss(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), std::log(2.0), 1e-12);
  EXPECT_NEAR(log_loss(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}), 0.0, 1e-11);
  EXPECT_EQ(brier(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}), 0.0);
}

TEST(Pav, MatchesBruteForceUpToLengthEight) {
  Rng rng(77);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(rng.below(5));
    const auto fit = pav(y);
    const auto oracle = brute_isotonic(y);
    ASSERT_EQ(fit.size(), oracle.size());
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(fit[i], oracle[i], 1e-12);
  }
}

TEST(Pav, WeightsActAsRepeats) {
  const std::vector<double> y = {3, 1, 2};
  const std::vector<double> w = {1, 2, 1};
  const auto fit = pav(y, w);
  const auto oracle = brute_isotonic({3, 1, 1, 2});
  EXPECT_NEAR(fit[0], oracle[0], 1e-12);
  EXPECT_NEAR(fit[1], oracle[1], 1e-12);
  EXPECT_NEAR(fit[2], oracle[3], 1e-12);
}

TEST(IsotonicMap, StepExample) {
  const auto m = IsotonicMap::fit(std::vector<double>{0.1, 0.9, 0.2, 0.8}, std::vector<int>{0, 1, 0, 1});
  EXPECT_EQ(m(0.1), 0.0);
  EXPECT_EQ(m(0.2), 0.0);
  EXPECT_EQ(m(0.05), 0.0);
  EXPECT_EQ(m(0.8), 1.0);
  EXPECT_EQ(m(0.95), 1.0);
  const double mid = m(0.5);
  EXPECT_GT(mid, 0.0);
  EXPECT_LT(mid, 1.0);
}

TEST(IsotonicMap, MonotoneAndAucNotLowered) {
  // Calibration is monotone, so it can merge but never reorder scores: the
  // AUC of calibrated scores is at least that of the raw scores.
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 20 + rng.below(80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = rng.uniform() < s[i] ? 1 : 0;
    }
    y[0] = 0;
    y[1] = 1;
    const auto m = IsotonicMap::fit(s, y);
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = m(s[i]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (s[i] <= s[j]) EXPECT_LE(c[i], c[j] + 1e-15);
      }
    }
    EXPECT_GE(roc_auc(c, y), roc_auc(s, y) - 1e-12);
  }
}
