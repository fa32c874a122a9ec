#pragma once

#include <span>
#include <stdexcept>

namespace cfrl {

/// I_x(a, b) by Lentz's continued fraction; converges to about 1e-10 relative accuracy.
double regularized_incomplete_beta(double a, double b, double x);

/// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Paired t-test on per-split scores. Needs equal lengths >= 2 and differences with nonzero
/// variance; a constant shift between the samples is rejected.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_stddev(std::span<const double> xs);

}  // namespace cfrl
