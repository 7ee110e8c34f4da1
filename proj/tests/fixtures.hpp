#pragma once

// Small random problems shared by the unit tests.

#include <Eigen/Dense>
#include <cstdint>

#include "fabreg/ols.hpp"
#include "fabreg/rng.hpp"

namespace fixture {

inline Eigen::MatrixXd gaussian_matrix(fabreg::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = fabreg::sample_normal(rng, 0.0, 1.0);
  return m;
}

inline Eigen::VectorXd gaussian_vector(fabreg::Rng& rng, Eigen::Index size, double sd = 1.0) {
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = fabreg::sample_normal(rng, 0.0, sd);
  return v;
}

/// y = X beta + N(0, sigma^2) with standard normal X.
inline fabreg::RegressionData linear_model(std::uint64_t seed, Eigen::Index n, Eigen::Index p,
                                           const Eigen::VectorXd& beta, double sigma = 1.0) {
  fabreg::Rng rng(seed);
  Eigen::MatrixXd x = gaussian_matrix(rng, n, p);
  Eigen::VectorXd y = x * beta + gaussian_vector(rng, n, sigma);
  return fabreg::make_regression_data(std::move(y), std::move(x));
}

}  // namespace fixture
