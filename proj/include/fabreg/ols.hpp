#pragma once

// Ordinary least squares and the per-coefficient projection decomposition
// y = y0 + y1 + y2 that separates the residual-variance information (y0),
// the coefficient's own estimate (y1), and the information left over for
// adapting its prior (y2). Coefficient indices are 0-based.

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "fabreg/dist.hpp"

namespace fabreg {

struct RegressionData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  /// True when columns were centred and scaled and y centred.
  bool standardized = false;

  std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
};

/// Validates shapes and finiteness (n > p >= 1). Missing names default to
/// "x1", "x2", ...
RegressionData make_regression_data(Eigen::VectorXd y, Eigen::MatrixXd x,
                                    std::vector<std::string> names = {});

/// Centre and unit-scale every column (sample sd), centre the response.
RegressionData standardize(const RegressionData& data);

struct OlsFit {
  Eigen::VectorXd beta_hat;
  double sigma2_hat = 0.0;
  /// w_j = sqrt(((X'X)^-1)_jj)
  Eigen::VectorXd w;
  DegreesOfFreedom df{1};

  // Thin QR of X, kept for the shared context path.
  Eigen::MatrixXd q;      // n x p, orthonormal columns
  Eigen::MatrixXd r;      // p x p, upper triangular
  Eigen::MatrixXd r_inv;  // p x p
  Eigen::VectorXd qty;    // Q'y

  double sigma_hat() const;
};

/// Throws RankDeficientError when the smallest singular value of X falls
/// below 1e-10 times the largest; the error names the first column that
/// makes the leading block singular.
OlsFit fit_ols(const RegressionData& data);

/// Statistics used to adapt the prior for one coefficient. Built only from
/// P2 y, so they are independent of (beta_hat_j, sigma2_hat). z2 is rounded
/// to 28 significant bits of its largest entry, which makes it bitwise
/// unaffected by round-off from the other components of y.
struct AdaptationData {
  Eigen::VectorXd z2;        // G2' y, length p - 1
  Eigen::MatrixXd x2;        // G2' X, (p - 1) x p
  Eigen::VectorXd spectrum;  // eigenvalues of X2 X2', descending

  bool empty() const { return z2.size() == 0; }
};

struct CoefficientContext {
  std::size_t index = 0;
  double beta_hat = 0.0;
  double w = 0.0;
  double sigma2_hat = 0.0;
  DegreesOfFreedom df{1};
  AdaptationData adaptation;
};

enum class ContextPath {
  /// Orthonormalize the range of P2 = P_X (I - P1) explicitly (O(n^2 p)).
  direct,
  /// Reuse the QR of X: range(P2) = Q * (r_j)^perp, where r_j is row j of R^-1.
  shared,
};

CoefficientContext coefficient_context(const RegressionData& data, const OlsFit& fit,
                                       std::size_t j,
                                       ContextPath path = ContextPath::shared);

/// Dense projection matrices for coefficient j. P_X is formed as
/// X (X'X)^-1 X'. Intended for diagnostics and tests; O(n^2) memory.
struct ProjectionDecomposition {
  Eigen::VectorXd a;  // row j of (X'X)^-1 X'
  Eigen::MatrixXd p0, p1, p2;
  Eigen::VectorXd y0, y1, y2;
};

ProjectionDecomposition decompose(const RegressionData& data, std::size_t j);

/// Project out every column not in `keep`: returns (G'y, G'X_keep) where G is
/// an orthonormal basis of the orthogonal complement of the dropped columns.
/// Under the linear model the result is again a linear model in the kept
/// coefficients with the same error variance.
RegressionData null_space_restrict(const RegressionData& data,
                                   const std::vector<std::size_t>& keep);

}  // namespace fabreg
