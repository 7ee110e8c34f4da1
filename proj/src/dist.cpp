#include "fabreg/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_open_unit(double p, const char* who) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError(std::string(who) + ": probability must lie in (0, 1), got " +
                      std::to_string(p));
  }
}

// Remainder of Stirling's series: lgamma(x) - [(x-1/2)log x - x + log(2pi)/2].
double stirling_remainder(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r * (1.0 / 12.0 -
              r2 * (1.0 / 360.0 -
                    r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))));
}

// lgamma(a + b) - lgamma(a) for a >= 10 without cancellation.
double lgamma_shift(double a, double b) {
  return (a - 0.5) * std::log1p(b / a) + b * std::log(a + b) - b +
         stirling_remainder(a + b) - stirling_remainder(a);
}

double log_beta(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b >= 10.0) {
    const double s = a + b;
    return 0.5 * std::log(2.0 * std::numbers::pi) - (a - 0.5) * std::log1p(b / a) +
           (b - 0.5) * std::log(b / s) - 0.5 * std::log(s) +
           (stirling_remainder(a) + stirling_remainder(b) - stirling_remainder(s));
  }
  if (a >= 10.0) {
    return std::lgamma(b) - lgamma_shift(a, b);
  }
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for I_x(a, b) (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr int max_iter = 20000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 2.0 * kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

// Acklam's rational approximation to the normal quantile (relative error
// about 1e-9), refined once with Halley's method below.
double acklam_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Upper tail P(T > x) for x >= 0.
double t_upper_tail(double x, double q) {
  const double x2 = x * x;
  const double denom = q + x2;
  return 0.5 * incomplete_beta(0.5 * q, 0.5, q / denom, x2 / denom);
}

double t_quantile_lower(double p, std::int64_t df) {
  // p in (0, 1/2): the quantile is negative.
  const double q = static_cast<double>(df);
  if (df == 1) return -1.0 / std::tan(std::numbers::pi * p);
  if (df == 2) return -(1.0 - 2.0 * p) / std::sqrt(2.0 * p * (1.0 - p));

  const DegreesOfFreedom dof(df);
  auto log_gap = [&](double x) { return std::fabs(std::log(t_cdf(x, dof)) - std::log(p)); };

  // Cornish-Fisher expansion around the normal quantile.
  const double z = normal_quantile(p);
  const double z2 = z * z;
  const double g1 = (z2 + 1.0) * z / 4.0;
  const double g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
  const double g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
  const double g4 =
      ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0;
  double x = z + g1 / q + g2 / (q * q) + g3 / (q * q * q) + g4 / (q * q * q * q);
  if (!(x < 0.0) || !std::isfinite(x)) x = z;

  if (p < 1e-3) {
    // Polynomial tail: F(x) ~ K q^((q-1)/2) |x|^-q.
    const double log_k = -log_beta(0.5 * q, 0.5) - 0.5 * std::log(q);
    const double log_abs = (log_k + 0.5 * (q - 1.0) * std::log(q) - std::log(p)) / q;
    const double tail = -std::exp(log_abs);
    if (std::isfinite(tail) && log_gap(tail) < log_gap(x)) x = tail;
  }

  // Bracket, then safeguarded Halley iteration.
  double fx = t_cdf(x, dof) - p;
  double lo = x, hi = x;
  if (fx < 0.0) {
    double step = std::max(1.0, std::fabs(x));
    hi = std::min(0.0, x + step);
    while (t_cdf(hi, dof) < p) {
      lo = hi;
      step *= 2.0;
      hi = std::min(0.0, hi + step);
    }
  } else {
    double step = std::max(1.0, std::fabs(x));
    lo = x - step;
    while (t_cdf(lo, dof) > p) {
      hi = lo;
      step *= 2.0;
      lo -= step;
    }
  }
  x = std::clamp(x, lo, hi);
  for (int iter = 0; iter < 300; ++iter) {
    fx = t_cdf(x, dof) - p;
    if (fx == 0.0) return x;
    if (fx < 0.0) lo = x; else hi = x;
    const double dens = t_pdf(x, dof);
    double next;
    if (dens > 0.0 && std::isfinite(dens)) {
      const double delta = fx / dens;
      const double curv = -(q + 1.0) * x / (q + x * x);
      const double denom = 1.0 - 0.5 * delta * curv;
      next = x - (denom > 0.5 ? delta / denom : delta);
    } else {
      next = 0.5 * (lo + hi);
    }
    if (!(next > lo && next < hi)) {
      // Bisect, geometrically when the bracket spans orders of magnitude.
      next = (hi < 0.0 && lo / hi > 4.0) ? -std::sqrt(lo * hi) : 0.5 * (lo + hi);
    }
    if (std::fabs(next - x) <= 4.0 * kEps * std::fabs(x)) return next;
    x = next;
  }
  return x;
}

}  // namespace

DegreesOfFreedom::DegreesOfFreedom(std::int64_t value) : value_(value) {
  if (value < 1) {
    throw DomainError("degrees of freedom must be >= 1, got " + std::to_string(value));
  }
}

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  require_open_unit(p, "normal_quantile");
  if (p == 0.5) return 0.0;
  double x = acklam_quantile(p);
  // One Halley step against the erfc-based CDF. The density ratio is taken
  // in logs so the step stays finite for subnormal-scale tails.
  const bool lower = p < 0.5;
  const double t = lower ? p : 1.0 - p;
  const double tail = 0.5 * std::erfc((lower ? -x : x) / std::numbers::sqrt2);
  const double e = lower ? tail - t : t - tail;
  const double u =
      (e / t) * std::exp(std::log(t) + 0.5 * x * x + 0.5 * std::log(2.0 * std::numbers::pi));
  if (std::isfinite(u)) x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double t_pdf(double x, DegreesOfFreedom dof) {
  const double q = dof.as_double();
  const double log_norm = -log_beta(0.5 * q, 0.5) - 0.5 * std::log(q);
  return std::exp(log_norm - 0.5 * (q + 1.0) * std::log1p(x * x / q));
}

double t_cdf(double x, DegreesOfFreedom dof) {
  if (std::isnan(x)) return x;
  if (x == 0.0) return 0.5;
  if (std::isinf(x)) return x > 0.0 ? 1.0 : 0.0;
  const double tail = t_upper_tail(std::fabs(x), dof.as_double());
  return x < 0.0 ? tail : 1.0 - tail;
}

double t_quantile(double p, DegreesOfFreedom dof) {
  require_open_unit(p, "t_quantile");
  if (p == 0.5) return 0.0;
  if (p > 0.5) return -t_quantile_lower(1.0 - p, dof.value());
  return t_quantile_lower(p, dof.value());
}

double incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_x = x < 0.5 ? std::log(x) : std::log1p(-y);
  const double log_y = y < 0.5 ? std::log(y) : std::log1p(-x);
  const double log_front = a * log_x + b * log_y - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

double incomplete_beta(double a, double b, double x) {
  return incomplete_beta(a, b, x, 1.0 - x);
}

double beta_quantile(double p, double a, double b) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("beta_quantile: p outside [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 1100 && hi - lo > 0.0; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (incomplete_beta(a, b, mid) < p) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double binomial_cdf(std::uint64_t k, std::uint64_t trials, double prob) {
  if (k >= trials) return 1.0;
  if (prob <= 0.0) return 1.0;
  if (prob >= 1.0) return 0.0;
  // P(X <= k) = I_{1-prob}(n - k, k + 1)
  return incomplete_beta(static_cast<double>(trials - k), static_cast<double>(k) + 1.0,
                         1.0 - prob, prob);
}

namespace {
// P(X >= k)
double binomial_upper(std::uint64_t k, std::uint64_t trials, double prob) {
  if (k == 0) return 1.0;
  if (k > trials) return 0.0;
  return incomplete_beta(static_cast<double>(k), static_cast<double>(trials - k) + 1.0,
                         prob, 1.0 - prob);
}
}  // namespace

BinomialInterval clopper_pearson(std::uint64_t successes, std::uint64_t trials,
                                 double level) {
  if (trials == 0) throw DomainError("clopper_pearson: trials must be >= 1");
  if (successes > trials) throw DomainError("clopper_pearson: successes exceed trials");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("clopper_pearson: level must lie in (0, 1)");
  const double tail = 0.5 * (1.0 - level);
  const double k = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  BinomialInterval out{0.0, 1.0};
  if (successes > 0) out.lower = beta_quantile(tail, k, n - k + 1.0);
  if (successes < trials) out.upper = beta_quantile(1.0 - tail, k + 1.0, n - k);
  return out;
}

CountBand binomial_acceptance_band(std::uint64_t trials, double p0, double level) {
  if (trials == 0) throw DomainError("binomial_acceptance_band: trials must be >= 1");
  if (!(p0 > 0.0 && p0 < 1.0)) throw DomainError("binomial_acceptance_band: p0 must lie in (0, 1)");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("binomial_acceptance_band: level must lie in (0, 1)");
  const double tail = 0.5 * (1.0 - level);
  // Smallest k with P(X <= k) > tail.
  std::uint64_t a = 0, b = trials;
  while (a < b) {
    const std::uint64_t mid = a + (b - a) / 2;
    if (binomial_cdf(mid, trials, p0) > tail) b = mid; else a = mid + 1;
  }
  const std::uint64_t lo = a;
  // Largest k with P(X >= k) > tail.
  a = 0;
  b = trials;
  while (a < b) {
    const std::uint64_t mid = a + (b - a + 1) / 2;
    if (binomial_upper(mid, trials, p0) > tail) a = mid; else b = mid - 1;
  }
  return CountBand{lo, a};
}

double PivotDistribution::cdf(double x) const {
  return is_normal() ? normal_cdf(x) : t_cdf(x, DegreesOfFreedom(df_));
}

double PivotDistribution::quantile(double p) const {
  return is_normal() ? normal_quantile(p) : t_quantile(p, DegreesOfFreedom(df_));
}

double PivotDistribution::quantile_or_inf(double p) const {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return quantile(p);
}

}  // namespace fabreg
