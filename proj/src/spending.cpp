#include "fabreg/spending.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();
const double kBelowOne = std::nextafter(1.0, 0.0);

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw DomainError("alpha must lie in (0, 1/2), got " + std::to_string(alpha));
  }
}

// Smallest s for which alpha * s is still a normal double.
double spending_floor(double alpha) {
  return 4.0 * std::numeric_limits<double>::min() / alpha;
}

// Solves spending_link(s) = x for x < 0, returning s in (0, 1/2).
double solve_lower_half(double x, double alpha) {
  const double floor = spending_floor(alpha);
  if (spending_link(floor, alpha) >= x) return floor;

  double lo = floor;
  double hi = 0.5;
  // Asymptotic start: h(s) ~ Phi^-1(alpha s) - Phi^-1(alpha) for small s.
  double s = normal_cdf(x + normal_quantile(alpha)) / alpha;
  if (!(s > lo && s < hi)) s = 0.25;

  for (int iter = 0; iter < 200; ++iter) {
    const double za = normal_quantile(alpha * s);
    const double zb = normal_quantile(alpha * (1.0 - s));
    const double f = (za - zb) - x;
    if (f == 0.0) return s;
    if (f < 0.0) lo = s; else hi = s;
    const double slope = alpha / normal_pdf(za) + alpha / normal_pdf(zb);
    double next = s - f / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      // Bisect in log space when the bracket spans orders of magnitude.
      next = (hi / lo > 16.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    }
    if (std::fabs(next - s) <= 2.0 * kEps * s) return next;
    s = next;
  }
  return s;
}

struct RootResult {
  double x;
  double f;
  int iters;
};

// Brent's method on [a, b] with f(a), f(b) of opposite sign. Runs until the
// bracket shrinks to a few ulps (or below x_floor), not merely until |f| is
// small: deep in the tails both sides of an endpoint equation can be far
// below any absolute probability tolerance while the root is still poorly
// located.
template <class F>
RootResult brent(F&& f, double a, double b, double fa, double fb, double f_tol,
                 double x_floor, const char* what) {
  if (fa == 0.0) return {a, fa, 0};
  if (fb == 0.0) return {b, fb, 0};
  if ((fa > 0.0) == (fb > 0.0)) {
    // Near the point-mass limit round-off can leave an end a hair on the
    // wrong side of zero; such an end is the root to within tolerance.
    if (std::fabs(fa) <= f_tol && std::fabs(fa) <= std::fabs(fb)) return {a, fa, 0};
    if (std::fabs(fb) <= f_tol) return {b, fb, 0};
    throw ConvergenceError(std::string(what) + ": root is not bracketed", a, b, fa, fb, 0);
  }
  double c = a, fc = fa;
  double d = b - a, e = d;
  for (int iter = 1; iter <= kMaxSolverIterations; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double x_tol = 2.0 * kEps * std::fabs(b) + x_floor;
    const double m = 0.5 * (c - b);
    if (fb == 0.0 || std::fabs(m) <= x_tol) return {b, fb, iter};
    if (std::fabs(e) >= x_tol && std::fabs(fa) > std::fabs(fb)) {
      // Secant or inverse quadratic interpolation.
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qa = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
        q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::fabs(x_tol * q), std::fabs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::fabs(d) > x_tol ? d : (m > 0.0 ? x_tol : -x_tol);
    fb = f(b);
  }
  throw ConvergenceError(std::string(what) + ": no convergence", std::min(b, c),
                         std::max(b, c), fb, fc, kMaxSolverIterations);
}

}  // namespace

std::string_view to_string(IntervalMethod method) {
  switch (method) {
    case IntervalMethod::umau: return "UMAU";
    case IntervalMethod::fab_t: return "FAB_T";
    case IntervalMethod::fab_z_oracle: return "FAB_Z_ORACLE";
  }
  return "UNKNOWN";
}

void SpendingSpec::validate() const {
  require_alpha(alpha);
  if (!(tau2 >= 0.0) || std::isnan(tau2)) throw DomainError("spending spec: tau2 must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("spending spec: sigma must be > 0");
  if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("spending spec: w must be > 0");
  if (!std::isfinite(mu)) throw DomainError("spending spec: mu must be finite");
}

bool SpendingSpec::is_step() const {
  const double sd = w * sigma;
  return tau2 < 1e-12 * sd * sd;
}

double spending_link(double s, double alpha) {
  require_alpha(alpha);
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("spending_link: s must lie in [0, 1]");
  if (s == 0.0) return -kInf;
  if (s == 1.0) return kInf;
  if (s == 0.5) return 0.0;
  return normal_quantile(alpha * s) - normal_quantile(alpha * (1.0 - s));
}

SpendingValue inverse_spending_link_pair(double x, double alpha) {
  require_alpha(alpha);
  if (std::isnan(x)) throw DomainError("inverse_spending_link: x is NaN");
  if (x == 0.0) return {0.5, 0.5};
  if (x < 0.0) {
    const double s = solve_lower_half(x, alpha);
    return {s, 1.0 - s};
  }
  // Antisymmetry: h(1 - s) = -h(s).
  const double c = solve_lower_half(-x, alpha);
  return {1.0 - c, c};
}

double inverse_spending_link(double x, double alpha) {
  return std::min(inverse_spending_link_pair(x, alpha).s, kBelowOne);
}

SpendingValue spending_pair(const SpendingSpec& spec, double beta) {
  if (spec.is_step()) {
    if (beta > spec.mu) return {1.0, 0.0};
    if (beta < spec.mu) return {0.0, 1.0};
    return {0.5, 0.5};
  }
  const double x = 2.0 * spec.w * spec.sigma * (beta - spec.mu) / spec.tau2;
  return inverse_spending_link_pair(x, spec.alpha);
}

double spending(const SpendingSpec& spec, double beta) {
  spec.validate();
  return spending_pair(spec, beta).s;
}

IntervalResult umau_interval(double beta_hat, double w, double sigma_hat,
                             DegreesOfFreedom df, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("umau_interval: alpha must lie in (0, 1)");
  if (!(w > 0.0) || !(sigma_hat >= 0.0)) throw DomainError("umau_interval: invalid scale");
  const double half = w * sigma_hat * t_quantile(1.0 - 0.5 * alpha, df);
  IntervalResult out;
  out.lower = beta_hat - half;
  out.upper = beta_hat + half;
  out.width = out.upper - out.lower;
  out.method = IntervalMethod::umau;
  return out;
}

double lower_endpoint_residual(double theta, double beta_hat, double scale,
                               const PivotDistribution& pivot, const SpendingSpec& spec) {
  const SpendingValue sv = spending_pair(spec, theta);
  return pivot.cdf((theta - beta_hat) / scale) - spec.alpha * sv.complement;
}

double upper_endpoint_residual(double theta, double beta_hat, double scale,
                               const PivotDistribution& pivot, const SpendingSpec& spec) {
  const SpendingValue sv = spending_pair(spec, theta);
  return pivot.cdf((beta_hat - theta) / scale) - spec.alpha * sv.s;
}

double fab_width_bound(double beta_hat, double scale, const PivotDistribution& pivot,
                       double mu, double alpha) {
  const double q = pivot.quantile(1.0 - 0.5 * alpha);
  return std::fabs(beta_hat - mu) + 2.0 * scale * q;
}

IntervalResult fab_interval(double beta_hat, double scale, const PivotDistribution& pivot,
                            const SpendingSpec& spec, double tol, IntervalMethod method) {
  spec.validate();
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("fab_interval: scale must be > 0");
  if (!std::isfinite(beta_hat)) throw DomainError("fab_interval: beta_hat must be finite");
  if (!(tol > 0.0)) throw DomainError("fab_interval: tol must be > 0");

  const double alpha = spec.alpha;
  const double q_alpha = pivot.quantile(alpha);              // < 0
  const double q_half = pivot.quantile(0.5 * alpha);         // < q_alpha
  IntervalResult out;
  out.method = method;

  if (spec.is_step()) {
    // Point-mass prior: s jumps from 0 to 1 at mu, so each endpoint equation
    // has a closed-form solution on one side of mu or sits on the jump.
    const double lo_candidate = beta_hat + scale * q_alpha;
    const double hi_candidate = beta_hat - scale * q_alpha;
    out.lower = std::min(spec.mu, lo_candidate);
    out.upper = std::max(spec.mu, hi_candidate);
    // At the jump s(mu) = 1/2, so mu itself is covered whenever the UMAU
    // condition holds there. An endpoint sitting on mu then moves out by one
    // ulp so that the open interval contains mu and no other double.
    const bool mu_member = pivot.cdf((spec.mu - beta_hat) / scale) > 0.5 * alpha &&
                           pivot.cdf((beta_hat - spec.mu) / scale) > 0.5 * alpha;
    if (mu_member && out.lower == spec.mu) out.lower = std::nextafter(spec.mu, -INFINITY);
    if (mu_member && out.upper == spec.mu) out.upper = std::nextafter(spec.mu, INFINITY);
    const double r_lo =
        lo_candidate < spec.mu ? std::fabs(pivot.cdf((lo_candidate - beta_hat) / scale) - alpha) : 0.0;
    const double r_hi =
        hi_candidate > spec.mu ? std::fabs(pivot.cdf((beta_hat - hi_candidate) / scale) - alpha) : 0.0;
    out.residual = std::max(r_lo, r_hi);
    out.width = out.upper - out.lower;
    return out;
  }

  // Brackets follow from s(theta) <= 1/2 below mu and >= 1/2 above mu:
  //   lower in [min(mu, b + scale q(alpha/2)), b + scale q(alpha)]
  //   upper in [b + scale q(1 - alpha), max(mu, b + scale q(1 - alpha/2))]
  const double f_tol = 1e-3 * tol;

  auto h_lower = [&](double theta) {
    return lower_endpoint_residual(theta, beta_hat, scale, pivot, spec);
  };
  // The margins keep the bracket signs strict when mu sits on a bound.
  const double margin = 1e-6 * scale;
  const double lo_a = std::min(spec.mu, beta_hat + scale * q_half) - margin;
  const double lo_b = beta_hat + scale * q_alpha;
  const double x_floor = 1e-15 * scale;
  const RootResult lower = brent(h_lower, lo_a, lo_b, h_lower(lo_a), h_lower(lo_b), f_tol,
                                 x_floor, "lower FAB endpoint");

  auto h_upper = [&](double theta) {
    return upper_endpoint_residual(theta, beta_hat, scale, pivot, spec);
  };
  const double up_a = beta_hat - scale * q_alpha;
  const double up_b = std::max(spec.mu, beta_hat - scale * q_half) + margin;
  const RootResult upper = brent(h_upper, up_a, up_b, h_upper(up_a), h_upper(up_b), f_tol,
                                 x_floor, "upper FAB endpoint");

  out.lower = lower.x;
  out.upper = upper.x;
  out.width = out.upper - out.lower;
  out.solver_iters = lower.iters + upper.iters;
  out.residual = std::max(std::fabs(lower.f), std::fabs(upper.f));
  if (out.residual > tol) {
    throw ConvergenceError("FAB endpoint residual exceeds tolerance", out.lower, out.upper,
                           lower.f, upper.f, out.solver_iters);
  }
  return out;
}

IntervalResult fab_interval_t(double beta_hat, double sigma_hat, DegreesOfFreedom df,
                              const SpendingSpec& spec, double tol) {
  if (!(sigma_hat > 0.0)) throw DomainError("fab_interval_t: sigma_hat must be > 0");
  return fab_interval(beta_hat, spec.w * sigma_hat, PivotDistribution::student(df), spec, tol,
                      IntervalMethod::fab_t);
}

IntervalResult fab_interval_z(double beta_hat, const SpendingSpec& spec, double tol) {
  return fab_interval(beta_hat, spec.w * spec.sigma, PivotDistribution::normal(), spec, tol,
                      IntervalMethod::fab_z_oracle);
}

bool region_membership(double theta, double beta_hat, double scale,
                       const PivotDistribution& pivot, const SpendingFunction& s,
                       double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("region_membership: alpha must lie in (0, 1)");
  if (!(scale > 0.0)) throw DomainError("region_membership: scale must be > 0");
  const double sv = s(theta);
  if (!(sv >= 0.0 && sv <= 1.0)) throw DomainError("region_membership: s(theta) outside [0, 1]");
  // b + scale q(alpha(1-s)) < theta  <=>  F((theta-b)/scale) > alpha(1-s)
  // theta < b + scale q(1-alpha s)   <=>  F((b-theta)/scale) > alpha s
  const double lower_p = alpha * (1.0 - sv);
  const double upper_p = alpha * sv;
  const bool above_lower = lower_p == 0.0 || pivot.cdf((theta - beta_hat) / scale) > lower_p;
  const bool below_upper = upper_p == 0.0 || pivot.cdf((beta_hat - theta) / scale) > upper_p;
  return above_lower && below_upper;
}

bool region_membership(double theta, double beta_hat, double scale, DegreesOfFreedom df,
                       const SpendingFunction& s, double alpha) {
  return region_membership(theta, beta_hat, scale, PivotDistribution::student(df), s, alpha);
}

}  // namespace fabreg
