#include "fabreg/ols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kOrthoTolerance = 1e-10;

double condition_ratio(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
  return sv(sv.size() - 1) / sv(0);
}

// First column k such that columns [0, k] of X are numerically dependent,
// judged on the leading block of R (same singular values as X[:, 0..k]).
std::size_t first_dependent_column(const Eigen::MatrixXd& r) {
  const Eigen::Index p = r.cols();
  for (Eigen::Index k = 0; k < p; ++k) {
    const Eigen::MatrixXd block =
        r.topLeftCorner(k + 1, k + 1).triangularView<Eigen::Upper>();
    if (condition_ratio(block) < kRankTolerance) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(p - 1);
}

Eigen::VectorXd descending_eigenvalues(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = eig.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::max(ev(i), 0.0);
  return ev;
}

void check_orthonormal_complement(const Eigen::MatrixXd& basis, const Eigen::VectorXd& dir) {
  const Eigen::Index k = basis.cols();
  const double gram_err =
      (basis.transpose() * basis - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  if (gram_err > kOrthoTolerance) {
    throw NumericError("adaptation basis is not orthonormal (max error " +
                       std::to_string(gram_err) + ")");
  }
  const double dir_norm = dir.norm();
  const double cross = (dir.transpose() * basis).cwiseAbs().maxCoeff() /
                       (dir_norm > 0.0 ? dir_norm : 1.0);
  if (cross > kOrthoTolerance) {
    throw NumericError("adaptation basis is not orthogonal to a (max error " +
                       std::to_string(cross) + ")");
  }
}

// Snaps z2 onto a grid of 2^-kAdaptationBits times its own binary scale.
// Mathematically z2 ignores any change of y along a; in floating point such
// a change still leaks in at round-off level, and the prior estimator can
// amplify that. On the grid the leak vanishes unless a coordinate sits
// within round-off of a grid boundary. Scaling by powers of two keeps the
// snapping exact.
constexpr int kAdaptationBits = 28;

void snap_to_grid(Eigen::VectorXd& z2) {
  const double top = z2.size() > 0 ? z2.cwiseAbs().maxCoeff() : 0.0;
  if (!(top > 0.0) || !std::isfinite(top)) return;
  const int exponent = std::ilogb(top) + 1 - kAdaptationBits;
  for (Eigen::Index i = 0; i < z2.size(); ++i) {
    z2(i) = std::ldexp(std::nearbyint(std::ldexp(z2(i), -exponent)), exponent);
  }
}

AdaptationData make_adaptation(Eigen::VectorXd z2, Eigen::MatrixXd x2) {
  AdaptationData out;
  out.spectrum = descending_eigenvalues(x2 * x2.transpose());
  snap_to_grid(z2);
  out.z2 = std::move(z2);
  out.x2 = std::move(x2);
  return out;
}

}  // namespace

RegressionData make_regression_data(Eigen::VectorXd y, Eigen::MatrixXd x,
                                    std::vector<std::string> names) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) {
    throw InputError("response has " + std::to_string(y.size()) + " rows but design has " +
                     std::to_string(n));
  }
  if (p < 1) throw InputError("design matrix has no columns");
  if (n <= p) {
    throw InputError("need more observations than regressors (n = " + std::to_string(n) +
                     ", p = " + std::to_string(p) + ")");
  }
  if (!y.allFinite() || !x.allFinite()) throw InputError("data contain non-finite values");
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != p) {
    throw InputError("expected " + std::to_string(p) + " column names, got " +
                     std::to_string(names.size()));
  }
  return RegressionData{std::move(y), std::move(x), std::move(names), false};
}

RegressionData standardize(const RegressionData& data) {
  RegressionData out = data;
  const double n = static_cast<double>(data.n());
  for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
    auto col = out.x.col(j);
    col.array() -= col.mean();
    const double sd = std::sqrt(col.squaredNorm() / (n - 1.0));
    if (!(sd > 0.0)) {
      throw InputError("column '" + data.names[j] + "' is constant and cannot be standardized");
    }
    col /= sd;
  }
  out.y.array() -= out.y.mean();
  out.standardized = true;
  return out;
}

double OlsFit::sigma_hat() const { return std::sqrt(sigma2_hat); }

OlsFit fit_ols(const RegressionData& data) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(data.x);
  OlsFit fit;
  fit.r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  if (condition_ratio(fit.r) < kRankTolerance) {
    const std::size_t col = first_dependent_column(fit.r);
    throw RankDeficientError(col, data.names.at(col));
  }
  fit.q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  fit.r_inv = fit.r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  fit.qty = fit.q.transpose() * data.y;
  fit.beta_hat = fit.r.triangularView<Eigen::Upper>().solve(fit.qty);
  fit.df = DegreesOfFreedom(n - p);
  const Eigen::VectorXd resid = data.y - data.x * fit.beta_hat;
  fit.sigma2_hat = resid.squaredNorm() / static_cast<double>(n - p);
  fit.w = fit.r_inv.rowwise().norm();
  return fit;
}

CoefficientContext coefficient_context(const RegressionData& data, const OlsFit& fit,
                                       std::size_t j, ContextPath path) {
  const Eigen::Index p = data.x.cols();
  if (j >= static_cast<std::size_t>(p)) {
    throw InputError("coefficient index " + std::to_string(j) + " out of range (p = " +
                     std::to_string(p) + ")");
  }
  CoefficientContext ctx;
  ctx.index = j;
  ctx.beta_hat = fit.beta_hat(j);
  ctx.w = fit.w(j);
  ctx.sigma2_hat = fit.sigma2_hat;
  ctx.df = fit.df;
  if (p == 1) {
    ctx.adaptation.z2 = Eigen::VectorXd(0);
    ctx.adaptation.x2 = Eigen::MatrixXd(0, 1);
    ctx.adaptation.spectrum = Eigen::VectorXd(0);
    return ctx;
  }

  if (path == ContextPath::shared) {
    // a = Q r_j, so range(P2) = Q * span(r_j)^perp.
    const Eigen::VectorXd rj = fit.r_inv.row(j).transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> reflect(rj);
    const Eigen::MatrixXd full = reflect.householderQ();
    const Eigen::MatrixXd h = full.rightCols(p - 1);
    check_orthonormal_complement(h, rj);
    ctx.adaptation = make_adaptation(h.transpose() * fit.qty, h.transpose() * fit.r);
    return ctx;
  }

  const ProjectionDecomposition dec = decompose(data, j);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> range(dec.p2);
  const Eigen::Index n = data.x.rows();
  const Eigen::MatrixXd g2 =
      (range.householderQ() * Eigen::MatrixXd::Identity(n, n)).leftCols(p - 1);
  check_orthonormal_complement(g2, dec.a);
  ctx.adaptation = make_adaptation(g2.transpose() * data.y, g2.transpose() * data.x);
  return ctx;
}

ProjectionDecomposition decompose(const RegressionData& data, std::size_t j) {
  const Eigen::Index n = data.x.rows();
  const Eigen::Index p = data.x.cols();
  if (j >= static_cast<std::size_t>(p)) {
    throw InputError("coefficient index " + std::to_string(j) + " out of range");
  }
  const Eigen::MatrixXd xtx = data.x.transpose() * data.x;
  const Eigen::LDLT<Eigen::MatrixXd> chol(xtx);
  const Eigen::MatrixXd hat_rows = chol.solve(data.x.transpose());  // (X'X)^-1 X'
  ProjectionDecomposition out;
  out.a = hat_rows.row(j).transpose();
  const Eigen::MatrixXd px = data.x * hat_rows;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  out.p0 = eye - px;
  out.p1 = out.a * out.a.transpose() / out.a.squaredNorm();
  out.p2 = px * (eye - out.p1);
  out.y0 = out.p0 * data.y;
  out.y1 = out.p1 * data.y;
  out.y2 = out.p2 * data.y;
  return out;
}

RegressionData null_space_restrict(const RegressionData& data,
                                   const std::vector<std::size_t>& keep) {
  const std::size_t p = data.p();
  const std::size_t n = data.n();
  if (keep.empty()) throw InputError("null_space_restrict: keep set is empty");
  std::vector<bool> kept(p, false);
  for (std::size_t c : keep) {
    if (c >= p) throw InputError("null_space_restrict: column index out of range");
    if (kept[c]) throw InputError("null_space_restrict: duplicate column index");
    kept[c] = true;
  }
  std::vector<std::size_t> dropped;
  for (std::size_t c = 0; c < p; ++c) {
    if (!kept[c]) dropped.push_back(c);
  }

  Eigen::MatrixXd x_keep(n, keep.size());
  std::vector<std::string> names;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    x_keep.col(k) = data.x.col(keep[k]);
    names.push_back(data.names[keep[k]]);
  }
  if (dropped.empty()) {
    RegressionData out{data.y, std::move(x_keep), std::move(names), data.standardized};
    return out;
  }

  const std::size_t residual_dim = n - dropped.size();
  if (residual_dim <= keep.size()) {
    throw InputError("null_space_restrict: " + std::to_string(residual_dim) +
                     " residual dimensions cannot support " + std::to_string(keep.size()) +
                     " kept columns");
  }
  Eigen::MatrixXd x_drop(n, dropped.size());
  for (std::size_t k = 0; k < dropped.size(); ++k) x_drop.col(k) = data.x.col(dropped[k]);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x_drop);
  const Eigen::Index d = static_cast<Eigen::Index>(dropped.size());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  if (condition_ratio(r) < kRankTolerance) {
    const std::size_t col = dropped[first_dependent_column(r)];
    throw RankDeficientError(col, data.names[col]);
  }
  const Eigen::MatrixXd q_full = qr.householderQ();
  const Eigen::MatrixXd g = q_full.rightCols(static_cast<Eigen::Index>(residual_dim));

  RegressionData out;
  out.y = g.transpose() * data.y;
  out.x = g.transpose() * x_keep;
  out.names = std::move(names);
  out.standardized = data.standardized;
  return out;
}

}  // namespace fabreg
