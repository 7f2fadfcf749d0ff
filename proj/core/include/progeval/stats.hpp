#pragma once

#include <optional>
#include <span>
#include <vector>

namespace progeval::stats {

double mean(std::span<const double> x);
/// Sample variance (n - 1 denominator); 0 for n < 2.
double variance(std::span<const double> x);

/// Regularized incomplete beta I_x(a, b) by Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

/// Student-t CDF with (possibly fractional) degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided(double t, double df);

struct TTestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  /// Zero standard error with a nonzero effect: statistic is +/-inf and
  /// p_value is 0 by convention instead of NaN.
  bool degenerate = false;
  /// Fewer than two observations in some sample; statistic undefined.
  bool undefined = false;
};

TTestResult one_sample_t(std::span<const double> x, double mu0);
TTestResult welch_t(std::span<const double> a, std::span<const double> b);

/// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation; nullopt when either vector is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Spearman correlation with average-rank ties; nullopt when either input
/// is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> x, double q);

}  // namespace progeval::stats
