#pragma once

// Monte Carlo studies: per-coefficient coverage and width of UMAU, adaptive
// FAB and oracle FAB intervals under a frozen design, and the trend of the
// adaptive-minus-oracle width gap as n grows with p/n fixed.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fabreg/pipeline.hpp"
#include "fabreg/rng.hpp"

namespace fabreg {

/// n x p design with standard normal rows; columns have pairwise correlation
/// rho (equicorrelated) when rho != 0. Requires -1/(p-1) < rho < 1.
Eigen::MatrixXd generate_design(std::size_t n, std::size_t p, double rho, std::uint64_t seed);

struct SimDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd beta0;
  double sigma2_0 = 1.0;
  std::size_t reps = 1000;
  double alpha = 0.05;
  std::vector<IntervalMethod> methods{IntervalMethod::umau, IntervalMethod::fab_t};
  std::uint64_t seed = 0;
  /// Prior variance handed to the oracle interval; defaults to mean(beta0^2).
  std::optional<double> oracle_tau2;
  PriorMethod estimator = PriorMethod::mle;
  PriorMeanMode prior_mean_mode = PriorMeanMode::zero;
  std::vector<std::string> names;
  unsigned threads = 1;

  /// Throws InputError on inconsistent dimensions or parameters.
  void validate() const;
};

struct MethodTally {
  IntervalMethod method = IntervalMethod::umau;
  std::size_t hits = 0;
  std::size_t reps = 0;
  double coverage = 0.0;
  double cp_low = 0.0;
  double cp_high = 1.0;
  double mean_width = 0.0;
  /// Largest endpoint residual seen over all reps.
  double max_residual = 0.0;
};

struct CoefficientCoverage {
  std::size_t column = 0;
  std::string name;
  double beta0 = 0.0;
  std::vector<MethodTally> methods;  // in SimDesign::methods order
};

struct Exclusion {
  std::size_t rep = 0;
  std::string message;
};

struct CoverageReport {
  std::size_t n = 0;
  std::size_t p = 0;
  double sigma2_0 = 0.0;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::size_t reps_requested = 0;
  std::size_t reps_completed = 0;
  std::vector<IntervalMethod> methods;
  std::vector<CoefficientCoverage> coefficients;
  std::vector<Exclusion> exclusions;
  /// Mean over coefficients of mean_width(method) / mean_width(UMAU); only
  /// filled when UMAU is among the methods.
  std::vector<std::pair<IntervalMethod, double>> mean_relative_width;
};

/// Each rep draws y ~ N(X beta0, sigma2_0 I) from substream `rep` of the
/// seed, so results do not depend on the thread count. A rep whose analysis
/// throws is listed in `exclusions` and left out of every tally.
CoverageReport run_study(const SimDesign& design);

struct TrendDesign {
  double c = 0.25;
  std::vector<std::size_t> n_grid{50, 100, 200, 400};
  double tau2 = 1.0;
  double sigma2_inf = 1.0;
  std::size_t reps = 500;
  double alpha = 0.05;
  double rho = 0.0;
  std::uint64_t seed = 0;
  PriorMethod estimator = PriorMethod::mle;
  unsigned threads = 1;

  void validate() const;
};

struct TrendRow {
  std::size_t n = 0;
  std::size_t p = 0;
  double adaptive_width = 0.0;
  double oracle_width = 0.0;
  double umau_width = 0.0;
  /// Mean of (adaptive - oracle) and its Monte Carlo standard error.
  double gap = 0.0;
  double gap_se = 0.0;
  std::size_t reps = 0;
  std::size_t exclusions = 0;
};

/// For each n: p = ceil(c n), sigma2 = n sigma2_inf, one frozen design, and
/// per rep beta ~ N(0, tau2 I) and y ~ N(X beta, sigma2 I). Widths are
/// averaged over all coefficients and reps. The oracle interval uses the true
/// (tau2, sigma2) with normal quantiles.
std::vector<TrendRow> width_convergence_study(const TrendDesign& design);

}  // namespace fabreg
