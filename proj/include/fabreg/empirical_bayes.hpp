#pragma once

// Empirical Bayes estimation of the normal prior N(mu, tau2) from the
// adaptation statistics of one coefficient. Under the prior,
//
//   z2 ~ N(X2 1 mu, tau2 X2 X2' + sigma2 I),
//
// and rotating into the eigenbasis of X2 X2' diagonalizes the covariance to
// lambda_i tau2 + sigma2.

#include <Eigen/Dense>
#include <optional>
#include <string_view>
#include <vector>

#include "fabreg/ols.hpp"

namespace fabreg {

enum class PriorMethod { moment, mle };

std::string_view to_string(PriorMethod method);

/// Compact parameter region [0, tau2_max] x [sigma2_min, sigma2_max].
struct ParameterBox {
  double tau2_max = 0.0;
  double sigma2_min = 0.0;
  double sigma2_max = 0.0;

  void validate() const;
  bool contains(double tau2, double sigma2) const {
    return tau2 >= 0.0 && tau2 <= tau2_max && sigma2 >= sigma2_min && sigma2 <= sigma2_max;
  }
};

struct MarginalModel {
  Eigen::VectorXd z2;
  Eigen::VectorXd spectrum;  // eigenvalues of X2 X2', descending, >= 0
  Eigen::VectorXd rotated;   // U' z2
  std::optional<Eigen::VectorXd> mean_design;  // U' X2 1

  Eigen::Index m() const { return z2.size(); }
};

/// Throws EmptyContextError when there are no adaptation statistics (p = 1).
MarginalModel build_marginal(const AdaptationData& adaptation, bool with_mean);
MarginalModel build_marginal(const CoefficientContext& ctx, bool with_mean);

/// Data-scaled default box: with v = mean(z2^2) and lbar = mean(spectrum),
/// tau2 <= 1e6 v / lbar and 1e-8 v <= sigma2 <= 1e6 v.
ParameterBox default_box(const MarginalModel& mm);

struct PriorEstimate {
  double mu = 0.0;
  double tau2 = 0.0;
  double sigma2 = 1.0;
  PriorMethod method = PriorMethod::mle;
  /// Final marginal negative log-likelihood (MLE only).
  std::optional<double> objective;
  ParameterBox box;

  /// A moment solution fell outside the box and was clamped onto it.
  bool clamped = false;
  /// Spectrum is zero: the likelihood does not depend on tau2.
  bool tau2_unidentified = false;
  /// Spectrum is constant: only lambda tau2 + sigma2 is identified.
  bool ridge = false;
  int iterations = 0;
  /// Objective values along the accepted optimizer iterates.
  std::vector<double> trajectory;
};

/// Q(tau2, sigma2) = (1/m) sum[(r_i - d_i mu)^2 / (lambda_i tau2 + sigma2)
///                            + log(lambda_i tau2 + sigma2)]
/// evaluated in the eigenbasis (d = mean_design, or 0 when absent).
double marginal_nll(const MarginalModel& mm, double tau2, double sigma2, double mu = 0.0);

/// Unbiased moment estimates from z'A'Az = tr(X2'A'AX2) tau2 + tr(A'A) sigma2
/// with A = I and A = X2'. Throws SingularMomentSystemError when the spectrum
/// is degenerate.
PriorEstimate moment_estimate(const MarginalModel& mm, const ParameterBox& box);
PriorEstimate moment_estimate(const MarginalModel& mm);

/// Moment estimates after removing the least-squares fit of the mean
/// (mu = d'r / d'd).
PriorEstimate moment_estimate_with_mean(const MarginalModel& mm, const ParameterBox& box);

/// Marginal maximum likelihood over the box: 16 x 16 log-spaced seed grid,
/// then projected Newton refinement. Throws OptimizerError when the projected
/// gradient does not reach 1e-7 (in data-scaled coordinates).
PriorEstimate mle_estimate(const MarginalModel& mm, const ParameterBox& box);
PriorEstimate mle_estimate(const MarginalModel& mm);

/// As mle_estimate, with mu profiled out by weighted least squares.
PriorEstimate mle_estimate_with_mean(const MarginalModel& mm, const ParameterBox& box);

}  // namespace fabreg
