#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fabreg/empirical_bayes.hpp"
#include "fabreg/error.hpp"
#include "fabreg/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fabreg;

namespace {

/// X2 = [diag(sqrt(lambda)) | 0] so that X2 X2' = diag(lambda), with
/// z2 = X2 beta + eps, beta ~ N(mu, tau2) iid and eps ~ N(0, sigma2).
AdaptationData diagonal_model(Rng& rng, const Eigen::VectorXd& lambda, double tau2,
                              double sigma2, double mu = 0.0) {
  const Eigen::Index m = lambda.size();
  AdaptationData a;
  a.x2 = Eigen::MatrixXd::Zero(m, m + 1);
  for (Eigen::Index i = 0; i < m; ++i) a.x2(i, i) = std::sqrt(lambda(i));
  Eigen::VectorXd beta(m + 1);
  for (Eigen::Index i = 0; i <= m; ++i) beta(i) = sample_normal(rng, mu, std::sqrt(tau2));
  a.z2 = a.x2 * beta + fixture::gaussian_vector(rng, m, std::sqrt(sigma2));
  a.spectrum = lambda;
  std::sort(a.spectrum.data(), a.spectrum.data() + m, std::greater<>());
  return a;
}

/// Half the eigenvalues near 0 and half near `hi`, which separates tau2 from
/// sigma2 far better than a uniform spread.
Eigen::VectorXd two_cluster_spectrum(Rng& rng, Eigen::Index m, double hi) {
  Eigen::VectorXd l(m);
  for (Eigen::Index i = 0; i < m; ++i) l(i) = (i % 2 == 0 ? 0.0 : hi - 0.1) + 0.1 * rng.uniform();
  return l;
}

Eigen::VectorXd uniform_spectrum(Rng& rng, Eigen::Index m, double hi) {
  Eigen::VectorXd l(m);
  for (Eigen::Index i = 0; i < m; ++i) l(i) = hi * rng.uniform();
  return l;
}

}  // namespace

TEST_CASE("empty context is rejected") {
  AdaptationData a;
  CHECK_THROWS_AS(build_marginal(a, false), EmptyContextError);
}

TEST_CASE("zero design leaves tau2 unidentified") {
  Rng rng(1);
  AdaptationData a;
  a.z2 = fixture::gaussian_vector(rng, 30, 2.0);
  a.x2 = Eigen::MatrixXd::Zero(30, 31);
  const MarginalModel mm = build_marginal(a, false);
  CHECK(mm.spectrum.cwiseAbs().maxCoeff() == 0.0);
  const PriorEstimate e = mle_estimate(mm);
  CHECK(e.tau2_unidentified);
  CHECK(e.tau2 == 0.0);
  CHECK(std::fabs(e.sigma2 - a.z2.squaredNorm() / 30.0) < 1e-8 * e.sigma2);
}

TEST_CASE("orthonormal design gives a ridge and singular moments") {
  Rng rng(2);
  const Eigen::MatrixXd g = fixture::gaussian_matrix(rng, 12, 20);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g.transpose());
  AdaptationData a;
  a.x2 = (qr.householderQ() * Eigen::MatrixXd::Identity(20, 12)).transpose();
  a.z2 = fixture::gaussian_vector(rng, 12, 1.5);
  const MarginalModel mm = build_marginal(a, false);
  CHECK((mm.spectrum.array() - 1.0).abs().maxCoeff() < 1e-10);
  const PriorEstimate e = mle_estimate(mm);
  CHECK(e.ridge);
  CHECK(std::fabs(e.tau2 + e.sigma2 - a.z2.squaredNorm() / 12.0) < 1e-6);
  CHECK_THROWS_AS(moment_estimate(mm), SingularMomentSystemError);
}

TEST_CASE("marginal model matches a dense eigendecomposition") {
  Rng rng(3);
  AdaptationData a;
  a.x2 = fixture::gaussian_matrix(rng, 8, 10);
  a.z2 = fixture::gaussian_vector(rng, 8);
  const MarginalModel mm = build_marginal(a, true);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.x2 * a.x2.transpose());
  const Eigen::VectorXd ref = es.eigenvalues().reverse();
  CHECK((mm.spectrum - ref).cwiseAbs().maxCoeff() < 1e-10 * ref(0));
  CHECK(std::fabs(mm.rotated.squaredNorm() - a.z2.squaredNorm()) < 1e-10);
  REQUIRE(mm.mean_design.has_value());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  CHECK(std::fabs(mm.mean_design->squaredNorm() - (a.x2 * ones).squaredNorm()) < 1e-9);
  CHECK(std::fabs(mm.mean_design->dot(mm.rotated) - (a.x2 * ones).dot(a.z2)) < 1e-9);
  CHECK_FALSE(build_marginal(a, false).mean_design.has_value());
}

TEST_CASE("eigenbasis likelihood equals the dense likelihood") {
  Rng rng(4);
  AdaptationData a;
  a.x2 = fixture::gaussian_matrix(rng, 9, 12);
  a.z2 = fixture::gaussian_vector(rng, 9, 2.0);
  const MarginalModel mm = build_marginal(a, true);
  for (double tau2 : {0.0, 0.1, 2.5})
    for (double sigma2 : {0.3, 1.0, 7.0})
      for (double mu : {0.0, -0.6}) {
        const double ref = oracle::dense_nll(a.z2, a.x2, tau2, sigma2, mu);
        CHECK(std::fabs(marginal_nll(mm, tau2, sigma2, mu) - ref) < 1e-10 * std::max(1.0, std::fabs(ref)));
      }
}

TEST_CASE("default box scales with the data") {
  Rng rng(5);
  const AdaptationData a = diagonal_model(rng, uniform_spectrum(rng, 50, 2.0), 1.0, 2.0);
  const MarginalModel mm = build_marginal(a, false);
  const ParameterBox box = default_box(mm);
  const double v = a.z2.squaredNorm() / 50.0;
  CHECK(std::fabs(box.tau2_max - 1e6 * v / mm.spectrum.mean()) < 1e-6 * box.tau2_max);
  CHECK(std::fabs(box.sigma2_min - 1e-8 * v) < 1e-20 + 1e-12 * v);
  CHECK(std::fabs(box.sigma2_max - 1e6 * v) < 1e-6 * box.sigma2_max);
  CHECK_NOTHROW(box.validate());
  ParameterBox bad = box;
  bad.sigma2_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("moment estimator solves the two trace equations") {
  Rng rng(6);
  const Eigen::VectorXd lambda = uniform_spectrum(rng, 400, 2.0);
  const AdaptationData a = diagonal_model(rng, lambda, 0.7, 1.3);
  const MarginalModel mm = build_marginal(a, false);
  // Cramer's rule on sum z^2 = tau2 sum l + m sigma2 and sum l z^2 =
  // tau2 sum l^2 + sigma2 sum l, evaluated directly in the original basis.
  const double m = 400.0;
  const double s1 = lambda.sum(), s2 = lambda.squaredNorm();
  const double q0 = a.z2.squaredNorm();
  const double q1 = (a.x2.transpose() * a.z2).squaredNorm();
  const double det = s1 * s1 - m * s2;
  const double tau2 = (q0 * s1 - m * q1) / det;
  const double sigma2 = (s1 * q1 - s2 * q0) / det;
  const PriorEstimate e = moment_estimate(mm);
  CHECK(e.method == PriorMethod::moment);
  CHECK(std::fabs(e.tau2 - std::max(tau2, 0.0)) < 1e-9);
  CHECK(std::fabs(e.sigma2 - sigma2) < 1e-9);
}

TEST_CASE("MLE recovers the prior on a large diagonal model") {
  Rng rng(7);
  const AdaptationData a = diagonal_model(rng, two_cluster_spectrum(rng, 2000, 50.0), 0.5, 3.0);
  const MarginalModel mm = build_marginal(a, false);
  const PriorEstimate e = mle_estimate(mm);
  CHECK(std::fabs(e.tau2 / 0.5 - 1.0) < 0.1);
  CHECK(std::fabs(e.sigma2 / 3.0 - 1.0) < 0.1);
  REQUIRE(e.objective.has_value());
  CHECK(*e.objective <= marginal_nll(mm, 0.5, 3.0) + 1e-12);
  CHECK(std::fabs(*e.objective - marginal_nll(mm, e.tau2, e.sigma2)) < 1e-12);
  // A local grid around the estimate never does better.
  for (double ft : {0.98, 1.0, 1.02})
    for (double fs : {0.98, 1.0, 1.02})
      CHECK(marginal_nll(mm, e.tau2 * ft, e.sigma2 * fs) >= *e.objective - 1e-12);
  for (std::size_t i = 1; i < e.trajectory.size(); ++i)
    CHECK(e.trajectory[i] <= e.trajectory[i - 1] + 1e-14);
}

TEST_CASE("MLE with an estimated mean") {
  Rng rng(8);
  const AdaptationData a = diagonal_model(rng, two_cluster_spectrum(rng, 2000, 50.0), 0.5, 1.0, 0.4);
  const MarginalModel mm = build_marginal(a, true);
  const PriorEstimate e = mle_estimate_with_mean(mm, default_box(mm));
  CHECK(std::fabs(e.mu - 0.4) < 0.12);
  CHECK(std::fabs(e.tau2 / 0.5 - 1.0) < 0.15);
  CHECK(std::fabs(e.sigma2 - 1.0) < 0.15);
  REQUIRE(e.objective.has_value());
  CHECK(*e.objective <= marginal_nll(mm, 0.5, 1.0, 0.4) + 1e-12);
  CHECK_THROWS_AS(mle_estimate_with_mean(build_marginal(a, false), default_box(mm)), InputError);
  const PriorEstimate mom = moment_estimate_with_mean(mm, default_box(mm));
  CHECK(std::fabs(mom.mu - 0.4) < 0.2);
}

TEST_CASE("MLE on a small random problem is a box-constrained minimum") {
  Rng rng(9);
  for (int c = 0; c < 20; ++c) {
    AdaptationData a;
    a.x2 = fixture::gaussian_matrix(rng, 15, 18);
    a.z2 = fixture::gaussian_vector(rng, 15, 1.0 + 3.0 * rng.uniform());
    const MarginalModel mm = build_marginal(a, false);
    const ParameterBox box = default_box(mm);
    const PriorEstimate e = mle_estimate(mm, box);
    CHECK(box.contains(e.tau2, e.sigma2));
    const double best = *e.objective;
    // Coarse log grid over the box never beats the optimizer.
    for (int i = 0; i <= 40; ++i)
      for (int k = 0; k <= 40; ++k) {
        const double t = i == 0 ? 0.0 : box.tau2_max * std::pow(10.0, -12.0 + 12.0 * i / 40.0);
        const double s = box.sigma2_min * std::pow(box.sigma2_max / box.sigma2_min, k / 40.0);
        CHECK(marginal_nll(mm, t, s) >= best - 1e-10);
      }
  }
}
