#pragma once

// End-to-end adaptive analysis: OLS fit, per-coefficient adaptation
// statistics, prior estimation, and UMAU plus FAB intervals for every
// coefficient.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fabreg/empirical_bayes.hpp"
#include "fabreg/ols.hpp"
#include "fabreg/spending.hpp"

namespace fabreg {

enum class PriorMeanMode { zero, estimated };

std::string_view to_string(PriorMeanMode mode);

struct ColumnGroup {
  std::string label;
  std::vector<std::size_t> columns;
};

struct AnalysisConfig {
  double alpha = 0.05;
  PriorMeanMode prior_mean_mode = PriorMeanMode::zero;
  PriorMethod estimator = PriorMethod::mle;
  /// When present, must partition all columns.
  std::optional<std::vector<ColumnGroup>> groups;
  bool standardize = false;
  std::uint64_t seed = 0;
  double tol = kDefaultSolverTolerance;
  /// Worker threads for the coefficient loop; 0 means hardware concurrency.
  unsigned threads = 1;

  /// Throws InputError naming the offending field.
  void validate() const;
};

/// A spending specification together with the prior estimate behind it.
struct AdaptiveSpec {
  SpendingSpec spec;
  PriorEstimate prior;
  /// The with-mean MLE failed and the zero-mean fit was used instead.
  bool mean_fallback = false;
};

/// Builds the spending spec for one coefficient. Only the adaptation
/// statistics (and the design constant w) enter, so the result cannot depend
/// on beta_hat_j or sigma2_hat.
AdaptiveSpec build_spending_spec(const AdaptationData& adaptation, double w,
                                 const AnalysisConfig& cfg);

struct CoefficientRecord {
  std::size_t column = 0;
  std::string name;
  std::string group;
  double beta_hat = 0.0;
  double w = 0.0;
  IntervalResult umau;
  IntervalResult fab;
  /// Absent when the coefficient has no adaptation data (p = 1).
  std::optional<PriorEstimate> prior;
  /// fab.width / umau.width, rounded to 4 decimals.
  double relative_width = 1.0;
  bool significant_umau = false;
  bool significant_fab = false;
  std::vector<std::string> flags;
};

struct GroupSummary {
  std::string label;
  std::size_t size = 0;
  std::size_t n_effective = 0;
  double sigma2_hat = 0.0;
  std::size_t df = 0;
  double tau_min = 0.0;
  double tau_max = 0.0;
  double mean_relative_width = 1.0;
};

struct AnalysisReport {
  std::vector<CoefficientRecord> records;  // sorted by column
  std::vector<GroupSummary> groups;        // empty for ungrouped analyses
  double sigma2_hat = 0.0;
  std::size_t df = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  AnalysisConfig config;

  double mean_relative_width() const;
};

/// Errors from any stage are rethrown with the coefficient name prefixed and
/// the original category (InputError, NumericError, ...) preserved.
AnalysisReport analyze(const RegressionData& data, const AnalysisConfig& cfg);

/// Each group is analysed on the data with the other groups projected out.
/// Uses cfg.groups; throws InputError when absent or not a partition.
AnalysisReport analyze_grouped(const RegressionData& data, const AnalysisConfig& cfg);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace fabreg
