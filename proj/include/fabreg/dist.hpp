#pragma once

// Distribution kernels: standard normal, Student-t with integer degrees of
// freedom, the regularized incomplete beta function, and exact binomial
// intervals. Every quantile in the library goes through this header.

#include <cstdint>

namespace fabreg {

/// Residual degrees of freedom of a regression (n - p). Always >= 1.
class DegreesOfFreedom {
 public:
  explicit DegreesOfFreedom(std::int64_t value);

  std::int64_t value() const noexcept { return value_; }
  double as_double() const noexcept { return static_cast<double>(value_); }

  friend bool operator==(DegreesOfFreedom, DegreesOfFreedom) = default;

 private:
  std::int64_t value_;
};

double normal_pdf(double x);
/// Standard normal CDF. Saturates to 0 or 1 in the extreme tails.
double normal_cdf(double x);
/// Inverse of normal_cdf. Throws DomainError unless 0 < p < 1.
double normal_quantile(double p);

double t_pdf(double x, DegreesOfFreedom q);
double t_cdf(double x, DegreesOfFreedom q);
/// Inverse of t_cdf. Throws DomainError unless 0 < p < 1.
double t_quantile(double p, DegreesOfFreedom q);

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
double incomplete_beta(double a, double b, double x, double y);
double incomplete_beta(double a, double b, double x);
/// Inverse of incomplete_beta in x.
double beta_quantile(double p, double a, double b);

/// P(X <= k) for X ~ Binomial(trials, prob).
double binomial_cdf(std::uint64_t k, std::uint64_t trials, double prob);

struct BinomialInterval {
  double lower;
  double upper;
};

/// Exact (Clopper-Pearson) interval for a binomial proportion at the given
/// confidence level (e.g. 0.95).
BinomialInterval clopper_pearson(std::uint64_t successes, std::uint64_t trials,
                                 double level);

struct CountBand {
  std::uint64_t lo;
  std::uint64_t hi;

  bool contains(std::uint64_t k) const noexcept { return lo <= k && k <= hi; }
};

/// Equal-tailed acceptance region of the exact two-sided binomial test of
/// H0: prob = p0 at the given level (e.g. 0.99): counts k with
/// P(X <= k) > (1-level)/2 and P(X >= k) > (1-level)/2.
CountBand binomial_acceptance_band(std::uint64_t trials, double p0, double level);

/// Reference distribution of a pivot: standard normal (known scale) or
/// Student-t with `df` degrees of freedom (estimated scale).
class PivotDistribution {
 public:
  static PivotDistribution normal() { return PivotDistribution(0); }
  static PivotDistribution student(DegreesOfFreedom df) {
    return PivotDistribution(df.value());
  }

  bool is_normal() const noexcept { return df_ == 0; }
  std::int64_t df() const noexcept { return df_; }

  double cdf(double x) const;
  double quantile(double p) const;
  /// Quantile extended to the closed unit interval: p = 0 gives -inf and
  /// p = 1 gives +inf.
  double quantile_or_inf(double p) const;

 private:
  explicit PivotDistribution(std::int64_t df) : df_(df) {}
  std::int64_t df_;
};

}  // namespace fabreg
