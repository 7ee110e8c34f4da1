#pragma once

// Spending functions and the confidence intervals they induce.
//
// A spending function s(theta) in [0, 1] splits the error rate alpha between
// the two tails of a pivot. For a pivot with CDF F and scale `scale`, the
// confidence region is
//
//   { theta : beta_hat + scale * F^-1(alpha (1 - s(theta))) < theta
//                     < beta_hat + scale * F^-1(1 - alpha s(theta)) }
//
// which has exact 1 - alpha coverage for every s, and is an interval when s
// is nondecreasing. The Bayes-optimal s under a N(mu, tau2) prior is
// s(theta) = h^-1(2 sd (theta - mu) / tau2), with the link
// h(s) = Phi^-1(alpha s) - Phi^-1(alpha (1 - s)).

#include <functional>
#include <string_view>

#include "fabreg/dist.hpp"

namespace fabreg {

enum class IntervalMethod { umau, fab_t, fab_z_oracle };

std::string_view to_string(IntervalMethod method);

/// Prior-derived parameters of a normal-prior spending function.
struct SpendingSpec {
  double mu = 0.0;     // prior centre
  double tau2 = 0.0;   // prior variance, >= 0
  double sigma = 1.0;  // error sd used for adaptation, > 0
  double w = 1.0;      // standard-error multiplier of the coefficient, > 0
  double alpha = 0.05; // in (0, 1/2)

  /// Throws DomainError when an invariant is violated.
  void validate() const;
  /// tau2 below 1e-12 (w sigma)^2 is handled as the point-mass prior.
  bool is_step() const;
};

struct IntervalResult {
  double lower = 0.0;
  double upper = 0.0;
  IntervalMethod method = IntervalMethod::umau;
  double width = 0.0;
  int solver_iters = 0;
  /// Largest endpoint-equation residual, in probability units.
  double residual = 0.0;

  /// Open-interval membership.
  bool contains(double theta) const { return lower < theta && theta < upper; }
};

/// s and 1 - s, each computed to full relative precision.
struct SpendingValue {
  double s;
  double complement;
};

/// h(s) = Phi^-1(alpha s) - Phi^-1(alpha (1 - s)). Returns -inf at s = 0 and
/// +inf at s = 1.
double spending_link(double s, double alpha);

/// Inverse of spending_link. For large |x| the pair form keeps both s and
/// 1 - s strictly positive, although s alone may round to 1.
double inverse_spending_link(double x, double alpha);
SpendingValue inverse_spending_link_pair(double x, double alpha);

/// Normal-prior spending function at `beta`. With tau2 = 0 this is the step
/// function 0 below mu, 1 above, 1/2 at mu.
double spending(const SpendingSpec& spec, double beta);
SpendingValue spending_pair(const SpendingSpec& spec, double beta);

/// Classical t interval beta_hat +- w sigma_hat t_{1 - alpha/2}.
IntervalResult umau_interval(double beta_hat, double w, double sigma_hat,
                             DegreesOfFreedom df, double alpha);

inline constexpr double kDefaultSolverTolerance = 1e-9;
inline constexpr int kMaxSolverIterations = 200;

/// Adaptive FAB t-interval: pivot t_df, scale spec.w * sigma_hat. The
/// spending spec must be statistically independent of (beta_hat, sigma_hat).
IntervalResult fab_interval_t(double beta_hat, double sigma_hat, DegreesOfFreedom df,
                              const SpendingSpec& spec,
                              double tol = kDefaultSolverTolerance);

/// Known-variance FAB z-interval: pivot N(0, 1), scale spec.w * spec.sigma.
IntervalResult fab_interval_z(double beta_hat, const SpendingSpec& spec,
                              double tol = kDefaultSolverTolerance);

/// Shared implementation behind fab_interval_t / fab_interval_z.
IntervalResult fab_interval(double beta_hat, double scale, const PivotDistribution& pivot,
                            const SpendingSpec& spec, double tol, IntervalMethod method);

/// Residual of the lower-endpoint equation F((theta - b)/scale) - alpha(1 - s).
/// Strictly increasing in theta for nondecreasing s; zero at the lower endpoint.
double lower_endpoint_residual(double theta, double beta_hat, double scale,
                               const PivotDistribution& pivot, const SpendingSpec& spec);
/// Residual of the upper-endpoint equation F((b - theta)/scale) - alpha s.
/// Strictly decreasing in theta; zero at the upper endpoint.
double upper_endpoint_residual(double theta, double beta_hat, double scale,
                               const PivotDistribution& pivot, const SpendingSpec& spec);

/// Upper bound on the FAB width: |beta_hat - mu| + scale (|q(alpha/2)| + |q(1-alpha/2)|).
double fab_width_bound(double beta_hat, double scale, const PivotDistribution& pivot,
                       double mu, double alpha);

using SpendingFunction = std::function<double(double)>;

/// Whether theta belongs to the confidence region of an arbitrary spending
/// function (not necessarily monotone). `scale` is w * sigma_hat.
bool region_membership(double theta, double beta_hat, double scale,
                       const PivotDistribution& pivot, const SpendingFunction& s,
                       double alpha);
bool region_membership(double theta, double beta_hat, double scale, DegreesOfFreedom df,
                       const SpendingFunction& s, double alpha);

}  // namespace fabreg
