#include "progeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace progeval::stats {
namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0 ? 1.0 - tail : tail;
}

double student_t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::min(1.0, incomplete_beta(0.5 * df, 0.5, x));
}

TTestResult one_sample_t(std::span<const double> x, double mu0) {
  TTestResult r;
  r.mean_difference = mean(x) - mu0;
  if (x.size() < 2) {
    r.undefined = true;
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.p_value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.df = static_cast<double>(x.size() - 1);
  const double se = std::sqrt(variance(x) / static_cast<double>(x.size()));
  if (se == 0.0) {
    if (r.mean_difference == 0.0) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.degenerate = true;
      r.statistic = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
      r.p_value = 0.0;
    }
    return r;
  }
  r.statistic = r.mean_difference / se;
  r.p_value = student_t_two_sided(r.statistic, r.df);
  return r;
}

TTestResult welch_t(std::span<const double> a, std::span<const double> b) {
  TTestResult r;
  r.mean_difference = mean(a) - mean(b);
  if (a.size() < 2 || b.size() < 2) {
    r.undefined = true;
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.p_value = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double va = variance(a) / static_cast<double>(a.size());
  const double vb = variance(b) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.df = static_cast<double>(a.size() + b.size() - 2);
    if (r.mean_difference == 0.0) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.degenerate = true;
      r.statistic = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
      r.p_value = 0.0;
    }
    return r;
  }
  r.statistic = r.mean_difference / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p_value = student_t_two_sided(r.statistic, r.df);
  return r;
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double percentile(std::vector<double> x, double q) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return x[lo] + frac * (x[hi] - x[lo]);
}

}  // namespace progeval::stats
