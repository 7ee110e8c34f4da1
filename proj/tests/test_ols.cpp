#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fabreg/error.hpp"
#include "fabreg/ols.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fabreg;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("exact fit recovers coefficients with zero residual variance") {
  Rng rng(5);
  Eigen::MatrixXd x = fixture::gaussian_matrix(rng, 12, 3);
  const Eigen::Vector3d beta(1.5, -2.0, 0.25);
  const OlsFit fit = fit_ols(make_regression_data(x * beta, x));
  CHECK(max_abs(fit.beta_hat - beta) < 1e-12);
  CHECK(fit.sigma2_hat < 1e-25);
  CHECK(fit.df.value() == 9);
}

TEST_CASE("degrees of freedom for a wide design") {
  const Eigen::VectorXd beta = Eigen::VectorXd::Zero(195);
  const OlsFit fit = fit_ols(fixture::linear_model(1, 287, 195, beta));
  CHECK(fit.df.value() == 92);
}

TEST_CASE("OLS agrees with the explicit normal-equations oracle") {
  Rng rng(11);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 8);
  const RegressionData data = fixture::linear_model(12, 60, 8, beta, 0.7);
  const OlsFit fit = fit_ols(data);
  const Eigen::VectorXd ref = oracle::ols_explicit(data.x, data.y);
  CHECK(max_abs(fit.beta_hat - ref) < 1e-10);
  const Eigen::VectorXd resid = data.y - data.x * ref;
  CHECK(std::fabs(fit.sigma2_hat - resid.squaredNorm() / 52.0) < 1e-10 * fit.sigma2_hat);
  const Eigen::MatrixXd inv = (data.x.transpose() * data.x).inverse();
  for (Eigen::Index j = 0; j < 8; ++j) CHECK(std::fabs(fit.w(j) - std::sqrt(inv(j, j))) < 1e-12);
}

TEST_CASE("projection decomposition properties") {
  Rng rng(21);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 5);
  const RegressionData data = fixture::linear_model(22, 30, 5, beta);
  const OlsFit fit = fit_ols(data);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(30, 30);
  for (std::size_t j = 0; j < 5; ++j) {
    CAPTURE(j);
    const ProjectionDecomposition d = decompose(data, j);
    const Eigen::MatrixXd* ps[] = {&d.p0, &d.p1, &d.p2};
    for (int k = 0; k < 3; ++k) {
      CHECK(max_abs(*ps[k] * *ps[k] - *ps[k]) < 1e-10);
      CHECK(max_abs(*ps[k] - ps[k]->transpose()) < 1e-10);
      for (int l = k + 1; l < 3; ++l) CHECK(max_abs(*ps[k] * *ps[l]) < 1e-10);
    }
    CHECK(max_abs(d.p0 + d.p1 + d.p2 - id) < 1e-10);
    CHECK(std::fabs(d.p1.trace() - 1.0) < 1e-10);
    CHECK(std::fabs(d.p2.trace() - 4.0) < 1e-10);
    CHECK(max_abs(d.y0 + d.y1 + d.y2 - data.y) < 1e-10);
    CHECK(std::fabs(d.a.dot(d.y1) - fit.beta_hat(static_cast<Eigen::Index>(j))) < 1e-10);
    CHECK(std::fabs(d.y0.squaredNorm() / 25.0 - fit.sigma2_hat) < 1e-10);
  }
}

TEST_CASE("shared and direct context paths agree on basis-free quantities") {
  Rng rng(31);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 7);
  const RegressionData data = fixture::linear_model(32, 40, 7, beta);
  const OlsFit fit = fit_ols(data);
  for (std::size_t j = 0; j < 7; ++j) {
    CAPTURE(j);
    const CoefficientContext s = coefficient_context(data, fit, j, ContextPath::shared);
    const CoefficientContext d = coefficient_context(data, fit, j, ContextPath::direct);
    CHECK(s.adaptation.z2.size() == 6);
    CHECK(d.adaptation.z2.size() == 6);
    CHECK(s.beta_hat == d.beta_hat);
    // z2 carries 28 significant bits, so basis-free comparisons are relative.
    const double zz = s.adaptation.z2.squaredNorm();
    CHECK(std::fabs(zz - d.adaptation.z2.squaredNorm()) < 1e-7 * zz);
    const Eigen::MatrixXd gs = s.adaptation.x2.transpose() * s.adaptation.x2;
    const Eigen::MatrixXd gd = d.adaptation.x2.transpose() * d.adaptation.x2;
    CHECK(max_abs(gs - gd) < 1e-8);
    const Eigen::VectorXd cs = s.adaptation.x2.transpose() * s.adaptation.z2;
    const Eigen::VectorXd cd = d.adaptation.x2.transpose() * d.adaptation.z2;
    CHECK(max_abs(cs - cd) < 1e-7 * std::max(1.0, max_abs(cs)));
    CHECK(max_abs(s.adaptation.spectrum - d.adaptation.spectrum) < 1e-8);
    // X2'X2 = X' P2 X and X2'z2 = X' P2 y.
    const ProjectionDecomposition pd = decompose(data, j);
    CHECK(max_abs(gs - data.x.transpose() * pd.p2 * data.x) < 1e-8);
    CHECK(max_abs(cs - data.x.transpose() * pd.y2) < 1e-7 * std::max(1.0, max_abs(cs)));
  }
}

TEST_CASE("adaptation spectrum interlaces the Gram spectrum") {
  // X2 X2' has the nonzero eigenvalues of X' P2 X, a rank-(p-1) compression
  // of X'X, so its sorted eigenvalues interlace those of X'X.
  Rng rng(41);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 6);
  const RegressionData data = fixture::linear_model(42, 25, 6, beta);
  const OlsFit fit = fit_ols(data);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(data.x.transpose() * data.x);
  const Eigen::VectorXd full = es.eigenvalues().reverse();
  for (std::size_t j = 0; j < 6; ++j) {
    const Eigen::VectorXd lam = coefficient_context(data, fit, j).adaptation.spectrum;
    REQUIRE(lam.size() == 5);
    for (Eigen::Index k = 0; k < 5; ++k) {
      CHECK(lam(k) <= full(k) * (1 + 1e-10));
      CHECK(lam(k) >= full(k + 1) * (1 - 1e-10));
      if (k > 0) CHECK(lam(k) <= lam(k - 1));
    }
  }
}

TEST_CASE("adaptation data does not move with the coefficient's own direction") {
  Rng rng(51);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 5);
  const RegressionData data = fixture::linear_model(52, 30, 5, beta);
  for (std::size_t j = 0; j < 5; ++j) {
    const ProjectionDecomposition d = decompose(data, j);
    RegressionData shifted = data;
    shifted.y += 3.7 * d.a / d.a.squaredNorm();
    const OlsFit f0 = fit_ols(data), f1 = fit_ols(shifted);
    const CoefficientContext c0 = coefficient_context(data, f0, j);
    const CoefficientContext c1 = coefficient_context(shifted, f1, j);
    CHECK(std::fabs(c1.beta_hat - c0.beta_hat - 3.7) < 1e-9);
    CHECK(std::fabs(c1.sigma2_hat - c0.sigma2_hat) < 1e-10);
    CHECK(c1.adaptation.z2 == c0.adaptation.z2);
  }
}

TEST_CASE("adaptation statistic is snapped to 28 significant bits") {
  Rng rng(55);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 6);
  const RegressionData data = fixture::linear_model(56, 30, 6, beta);
  const OlsFit fit = fit_ols(data);
  const Eigen::VectorXd z = coefficient_context(data, fit, 1).adaptation.z2;
  const int e = std::ilogb(z.cwiseAbs().maxCoeff()) + 1 - 28;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double scaled = std::ldexp(z(i), -e);
    CHECK(scaled == std::nearbyint(scaled));
  }
  const Eigen::VectorXd raw = coefficient_context(data, fit, 1, ContextPath::direct).adaptation.z2;
  CHECK(std::fabs(raw.norm() - z.norm()) < 1e-7 * z.norm());
}

TEST_CASE("beta_hat is uncorrelated with the adaptation statistics") {
  Rng design_rng(61);
  const Eigen::MatrixXd x = fixture::gaussian_matrix(design_rng, 40, 6);
  const Eigen::VectorXd mean = x * Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  const int reps = 5000;
  Rng rng(62);
  std::vector<double> b(reps), z(reps), s(reps);
  for (int r = 0; r < reps; ++r) {
    const RegressionData data = make_regression_data(mean + fixture::gaussian_vector(rng, 40), x);
    const OlsFit fit = fit_ols(data);
    const CoefficientContext c = coefficient_context(data, fit, 2);
    b[r] = c.beta_hat;
    z[r] = c.adaptation.z2(0);
    s[r] = c.sigma2_hat;
  }
  auto corr = [&](const std::vector<double>& u, const std::vector<double>& v) {
    double mu = 0, mv = 0;
    for (int i = 0; i < reps; ++i) mu += u[i], mv += v[i];
    mu /= reps;
    mv /= reps;
    double suv = 0, suu = 0, svv = 0;
    for (int i = 0; i < reps; ++i) {
      suv += (u[i] - mu) * (v[i] - mv);
      suu += (u[i] - mu) * (u[i] - mu);
      svv += (v[i] - mv) * (v[i] - mv);
    }
    return suv / std::sqrt(suu * svv);
  };
  const double bound = 4.0 / std::sqrt(static_cast<double>(reps));
  CHECK(std::fabs(corr(b, z)) < bound);
  CHECK(std::fabs(corr(b, s)) < bound);
  CHECK(std::fabs(corr(z, s)) < bound);
}

TEST_CASE("null-space restriction preserves the kept coefficients") {
  Rng rng(71);
  const Eigen::VectorXd beta = fixture::gaussian_vector(rng, 6);
  const RegressionData data = fixture::linear_model(72, 30, 6, beta);
  const OlsFit full = fit_ols(data);
  const std::vector<std::size_t> keep = {1, 4};
  const RegressionData sub = null_space_restrict(data, keep);
  CHECK(sub.n() == 26);
  CHECK(sub.p() == 2);
  CHECK(sub.names[0] == data.names[1]);
  CHECK(sub.names[1] == data.names[4]);
  const OlsFit part = fit_ols(sub);
  CHECK(std::fabs(part.beta_hat(0) - full.beta_hat(1)) < 1e-10);
  CHECK(std::fabs(part.beta_hat(1) - full.beta_hat(4)) < 1e-10);
  CHECK(std::fabs(part.sigma2_hat - full.sigma2_hat) < 1e-10);
  CHECK(part.df.value() == full.df.value());
}

TEST_CASE("null-space restriction on a three-block split") {
  const Eigen::VectorXd beta = Eigen::VectorXd::Zero(64);
  const RegressionData data = fixture::linear_model(81, 442, 64, beta);
  std::vector<std::size_t> a, b, c;
  for (std::size_t j = 0; j < 64; ++j) (j < 10 ? a : j < 19 ? b : c).push_back(j);
  CHECK(null_space_restrict(data, a).n() == 442 - 54);
  CHECK(null_space_restrict(data, b).n() == 442 - 55);
  CHECK(null_space_restrict(data, c).n() == 442 - 19);
  CHECK(null_space_restrict(data, c).p() == 45);
}

TEST_CASE("rank deficiency names the offending column") {
  Rng rng(91);
  Eigen::MatrixXd x = fixture::gaussian_matrix(rng, 20, 4);
  x.col(2) = x.col(0) - 2.0 * x.col(1);
  const RegressionData data = make_regression_data(fixture::gaussian_vector(rng, 20), x);
  try {
    fit_ols(data);
    FAIL("expected RankDeficientError");
  } catch (const RankDeficientError& e) {
    CHECK(e.column() == 2);
    CHECK(e.column_name() == "x3");
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(make_regression_data(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3)),
                  InputError);
  CHECK_THROWS_AS(make_regression_data(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Zero(5, 2)),
                  InputError);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(5);
  y(1) = std::nan("");
  CHECK_THROWS_AS(make_regression_data(y, Eigen::MatrixXd::Ones(5, 2)), InputError);
}

TEST_CASE("standardize centres and scales") {
  Rng rng(101);
  Eigen::MatrixXd x = fixture::gaussian_matrix(rng, 50, 3) * 4.0;
  x.array() += 2.0;
  const RegressionData s = standardize(make_regression_data(fixture::gaussian_vector(rng, 50), x));
  CHECK(s.standardized);
  CHECK(std::fabs(s.y.mean()) < 1e-12);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const Eigen::VectorXd c = s.x.col(j);
    CHECK(std::fabs(c.mean()) < 1e-12);
    CHECK(std::fabs(c.squaredNorm() / 49.0 - 1.0) < 1e-12);
  }
}
