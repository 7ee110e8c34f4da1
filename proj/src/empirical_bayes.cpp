#include "fabreg/empirical_bayes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr double kGradientTolerance = 1e-7;
constexpr double kStepTolerance = 1e-12;
constexpr int kMaxNewtonIterations = 200;
constexpr int kGridSize = 16;

double mean_square(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.squaredNorm() / static_cast<double>(v.size());
}

// Data-scaled problem: u = tau2 * lbar / s, v = sigma2 / s, lambda~ = lambda / lbar,
// r~ = r / sqrt(s), d~ = d / sqrt(s) * sqrt(s) (mean design stays in r units),
// so that every box and tolerance is scale free.
struct ScaledProblem {
  Eigen::VectorXd lambda;  // lambda / lbar
  Eigen::VectorXd r;       // rotated / sqrt(s)
  Eigen::VectorXd d;       // mean_design / sqrt(s) (so mu is unchanged)
  bool with_mean = false;
  double s = 1.0;
  double lbar = 1.0;
  double u_max = 0.0, v_min = 0.0, v_max = 0.0;

  double to_tau2(double u) const { return u * s / lbar; }
  double to_sigma2(double v) const { return v * s; }
  double to_u(double tau2) const { return tau2 * lbar / s; }
  double to_v(double sigma2) const { return sigma2 / s; }
  double m() const { return static_cast<double>(r.size()); }
};

ScaledProblem make_scaled(const MarginalModel& mm, const ParameterBox& box, bool with_mean) {
  ScaledProblem sp;
  sp.s = mean_square(mm.z2);
  if (!(sp.s > 0.0)) sp.s = 1.0;
  const double lbar = mm.spectrum.size() ? mm.spectrum.mean() : 0.0;
  sp.lbar = lbar > 0.0 ? lbar : 1.0;
  sp.lambda = mm.spectrum / sp.lbar;
  const double root_s = std::sqrt(sp.s);
  sp.r = mm.rotated / root_s;
  sp.with_mean = with_mean && mm.mean_design.has_value();
  if (sp.with_mean) {
    sp.d = *mm.mean_design / root_s;
  } else {
    sp.d = Eigen::VectorXd::Zero(mm.rotated.size());
  }
  sp.u_max = sp.to_u(box.tau2_max);
  sp.v_min = sp.to_v(box.sigma2_min);
  sp.v_max = sp.to_v(box.sigma2_max);
  return sp;
}

// Weighted least-squares mean for fixed variances; 0 when not identified.
double profile_mean(const ScaledProblem& sp, const Eigen::ArrayXd& var) {
  if (!sp.with_mean) return 0.0;
  const double den = (sp.d.array().square() / var).sum();
  if (!(den > 0.0)) return 0.0;
  return (sp.d.array() * sp.r.array() / var).sum() / den;
}

struct Evaluation {
  double value;
  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
  double mu;
};

// Objective in scaled coordinates (mu profiled out when requested), with the
// exact gradient and Hessian of the profile.
Evaluation evaluate(const ScaledProblem& sp, double u, double v, bool derivatives) {
  const Eigen::ArrayXd var = sp.lambda.array() * u + v;
  const double mu = profile_mean(sp, var);
  const Eigen::ArrayXd e = sp.r.array() - sp.d.array() * mu;
  const Eigen::ArrayXd e2 = e.square();
  const double m = sp.m();
  Evaluation out;
  out.mu = mu;
  out.value = (e2 / var + var.log()).sum() / m;
  if (!derivatives) return out;

  const Eigen::ArrayXd inv = var.inverse();
  const Eigen::ArrayXd inv2 = inv.square();
  const Eigen::ArrayXd common = inv - e2 * inv2;          // d/dvar of each term
  const Eigen::ArrayXd curv = 2.0 * e2 * inv2 * inv - inv2;  // d2/dvar2
  const Eigen::ArrayXd& lam = sp.lambda.array();
  out.grad(0) = (lam * common).sum() / m;
  out.grad(1) = common.sum() / m;
  out.hess(0, 0) = (lam.square() * curv).sum() / m;
  out.hess(0, 1) = (lam * curv).sum() / m;
  out.hess(1, 0) = out.hess(0, 1);
  out.hess(1, 1) = curv.sum() / m;
  if (sp.with_mean) {
    const double h_mm = 2.0 * (sp.d.array().square() * inv).sum() / m;
    if (h_mm > 0.0) {
      const Eigen::ArrayXd cross = 2.0 * sp.d.array() * e * inv2;
      const Eigen::Vector2d h_tm((lam * cross).sum() / m, cross.sum() / m);
      out.hess -= h_tm * h_tm.transpose() / h_mm;
    }
  }
  return out;
}

struct BoxState {
  double lo[2];
  double hi[2];

  Eigen::Vector2d project(Eigen::Vector2d x) const {
    for (int i = 0; i < 2; ++i) x(i) = std::clamp(x(i), lo[i], hi[i]);
    return x;
  }

  Eigen::Vector2d projected_gradient(const Eigen::Vector2d& x, const Eigen::Vector2d& g) const {
    Eigen::Vector2d pg = g;
    for (int i = 0; i < 2; ++i) {
      if ((x(i) <= lo[i] && g(i) > 0.0) || (x(i) >= hi[i] && g(i) < 0.0)) pg(i) = 0.0;
    }
    return pg;
  }
};

struct NewtonResult {
  Eigen::Vector2d x;
  Evaluation eval;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trajectory;
};

NewtonResult projected_newton(const ScaledProblem& sp, const BoxState& box, Eigen::Vector2d x) {
  NewtonResult res;
  x = box.project(x);
  Evaluation ev = evaluate(sp, x(0), x(1), true);
  res.trajectory.push_back(ev.value);
  for (int iter = 0; iter < kMaxNewtonIterations; ++iter) {
    res.iterations = iter;
    const Eigen::Vector2d pg = box.projected_gradient(x, ev.grad);
    if (pg.cwiseAbs().maxCoeff() <= kGradientTolerance) {
      res.converged = true;
      break;
    }
    // Newton step on the free coordinates, damped until positive definite.
    std::array<bool, 2> free{pg(0) != 0.0, pg(1) != 0.0};
    Eigen::Matrix2d h = ev.hess;
    for (int i = 0; i < 2; ++i) {
      if (!free[i]) {
        h.row(i).setZero();
        h.col(i).setZero();
        h(i, i) = 1.0;
      }
    }
    Eigen::Vector2d dir = Eigen::Vector2d::Zero();
    double damping = 0.0;
    const double diag_scale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (int attempt = 0; attempt < 60; ++attempt) {
      const Eigen::Matrix2d hd = h + damping * Eigen::Matrix2d::Identity();
      Eigen::LLT<Eigen::Matrix2d> llt(hd);
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(pg);
        if (pg.dot(dir) < 0.0) break;
      }
      damping = damping == 0.0 ? 1e-8 * diag_scale : damping * 10.0;
    }
    if (!(pg.dot(dir) < 0.0)) dir = -pg;

    // Armijo backtracking along the projected path.
    double step = 1.0;
    bool accepted = false;
    Eigen::Vector2d x_new = x;
    Evaluation ev_new = ev;
    for (int ls = 0; ls < 80; ++ls) {
      x_new = box.project(x + step * dir);
      ev_new = evaluate(sp, x_new(0), x_new(1), false);
      if (std::isfinite(ev_new.value) &&
          ev_new.value <= ev.value + 1e-4 * ev.grad.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (x_new - x).cwiseAbs().maxCoeff();
    x = x_new;
    ev = evaluate(sp, x(0), x(1), true);
    res.trajectory.push_back(ev.value);
    if (moved <= kStepTolerance * (1.0 + x.cwiseAbs().maxCoeff())) {
      res.converged = true;
      res.iterations = iter + 1;
      break;
    }
  }
  if (!res.converged) {
    const Eigen::Vector2d pg = box.projected_gradient(x, ev.grad);
    res.converged = pg.cwiseAbs().maxCoeff() <= kGradientTolerance;
  }
  res.x = x;
  res.eval = ev;
  return res;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> out(count);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * i / (count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

bool spectrum_is_zero(const Eigen::VectorXd& spectrum) {
  return spectrum.size() == 0 || spectrum.maxCoeff() <= 0.0;
}

bool spectrum_is_constant(const Eigen::VectorXd& spectrum) {
  if (spectrum.size() == 0) return true;
  const double hi = spectrum.maxCoeff();
  const double lo = spectrum.minCoeff();
  return hi - lo <= 1e-10 * hi;
}

PriorEstimate run_mle(const MarginalModel& mm, const ParameterBox& box, bool with_mean) {
  box.validate();
  if (mm.m() == 0) throw EmptyContextError("no adaptation statistics: z2 is empty");
  const ScaledProblem sp = make_scaled(mm, box, with_mean);

  PriorEstimate est;
  est.method = PriorMethod::mle;
  est.box = box;

  if (spectrum_is_zero(mm.spectrum) || spectrum_is_constant(mm.spectrum)) {
    // Only lambda tau2 + sigma2 is identified; report the tau2 = 0 end of the
    // ridge with the closed-form variance.
    const bool zero = spectrum_is_zero(mm.spectrum);
    est.tau2_unidentified = zero;
    est.ridge = !zero;
    const Eigen::ArrayXd ones = Eigen::ArrayXd::Ones(sp.r.size());
    const double mu = profile_mean(sp, ones);
    const double v = (sp.r.array() - sp.d.array() * mu).square().mean();
    const double v_clamped = std::clamp(v, sp.v_min, sp.v_max);
    est.clamped = v_clamped != v;
    est.tau2 = 0.0;
    est.sigma2 = sp.to_sigma2(v_clamped);
    est.mu = mu;
    est.objective = marginal_nll(mm, est.tau2, est.sigma2, est.mu);
    est.trajectory.push_back(*est.objective);
    return est;
  }

  BoxState bs{{0.0, sp.v_min}, {sp.u_max, sp.v_max}};
  std::vector<double> u_grid{0.0};
  for (double u : log_grid(sp.u_max * 1e-12, sp.u_max, kGridSize - 1)) u_grid.push_back(u);
  const std::vector<double> v_grid = log_grid(sp.v_min, sp.v_max, kGridSize);

  struct Seed {
    double u, v, value;
  };
  std::vector<Seed> seeds;
  seeds.reserve(u_grid.size() * v_grid.size());
  for (double u : u_grid) {
    for (double v : v_grid) seeds.push_back({u, v, evaluate(sp, u, v, false).value});
  }
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const Seed& a, const Seed& b) { return a.value < b.value; });

  NewtonResult best;
  bool have_best = false;
  const std::size_t starts = std::min<std::size_t>(3, seeds.size());
  for (std::size_t k = 0; k < starts; ++k) {
    NewtonResult res = projected_newton(sp, bs, Eigen::Vector2d(seeds[k].u, seeds[k].v));
    if (!res.converged) continue;
    if (!have_best || res.eval.value < best.eval.value) {
      best = std::move(res);
      have_best = true;
    }
  }
  if (!have_best) {
    std::vector<OptimizerError::Seed> trace;
    for (std::size_t k = 0; k < starts; ++k) {
      trace.push_back({sp.to_tau2(seeds[k].u), sp.to_sigma2(seeds[k].v), seeds[k].value});
    }
    throw OptimizerError("marginal likelihood optimizer did not converge", std::move(trace));
  }

  est.tau2 = sp.to_tau2(best.x(0));
  est.sigma2 = sp.to_sigma2(best.x(1));
  // Clamp away round-off drift through the unit conversion.
  est.tau2 = std::clamp(est.tau2, 0.0, box.tau2_max);
  est.sigma2 = std::clamp(est.sigma2, box.sigma2_min, box.sigma2_max);
  est.mu = best.eval.mu;
  est.iterations = best.iterations;
  const double offset = std::log(sp.s);
  for (double q : best.trajectory) est.trajectory.push_back(q + offset);
  est.objective = marginal_nll(mm, est.tau2, est.sigma2, est.mu);
  return est;
}

PriorEstimate solve_moments(const Eigen::VectorXd& r, const Eigen::VectorXd& lambda,
                            const ParameterBox& box) {
  box.validate();
  const double m = static_cast<double>(r.size());
  if (r.size() == 0) throw EmptyContextError("no adaptation statistics: z2 is empty");
  const Eigen::ArrayXd r2 = r.array().square();
  const double s1 = r2.sum();
  const double s2 = (lambda.array() * r2).sum();
  const double l1 = lambda.sum();
  const double l2 = lambda.squaredNorm();
  // [l1 m; l2 l1] [tau2; sigma2] = [s1; s2]
  const double det = l1 * l1 - m * l2;
  if (!(std::fabs(det) > 1e-10 * m * l2)) {
    throw SingularMomentSystemError(
        "moment equations are singular (spectrum is constant); use the MLE estimator "
        "with a box constraint instead");
  }
  const double tau2 = (s1 * l1 - m * s2) / det;
  const double sigma2 = (l1 * s2 - l2 * s1) / det;

  PriorEstimate est;
  est.method = PriorMethod::moment;
  est.box = box;
  est.tau2 = std::clamp(tau2, 0.0, box.tau2_max);
  est.sigma2 = std::clamp(sigma2, box.sigma2_min, box.sigma2_max);
  est.clamped = est.tau2 != tau2 || est.sigma2 != sigma2;
  return est;
}

}  // namespace

std::string_view to_string(PriorMethod method) {
  return method == PriorMethod::moment ? "MOMENT" : "MLE";
}

void ParameterBox::validate() const {
  if (!(tau2_max > 0.0) || !(sigma2_min > 0.0) || !(sigma2_max > sigma2_min) ||
      !std::isfinite(tau2_max) || !std::isfinite(sigma2_max)) {
    throw DomainError("parameter box must satisfy tau2_max > 0 and 0 < sigma2_min < sigma2_max");
  }
}

MarginalModel build_marginal(const AdaptationData& adaptation, bool with_mean) {
  if (adaptation.empty()) {
    throw EmptyContextError("no adaptation statistics: the coefficient has no companions");
  }
  const Eigen::MatrixXd gram = adaptation.x2 * adaptation.x2.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of X2 X2' failed");
  const Eigen::Index m = gram.rows();
  // Descending order.
  const Eigen::MatrixXd u = eig.eigenvectors().rowwise().reverse();
  Eigen::VectorXd lambda = eig.eigenvalues().reverse();

  const double scale = std::max(gram.norm(), std::numeric_limits<double>::min());
  const double recon = (u * lambda.asDiagonal() * u.transpose() - gram).norm();
  if (recon > 1e-8 * scale) {
    throw NumericError("eigendecomposition reconstruction error " + std::to_string(recon));
  }
  for (Eigen::Index i = 0; i < m; ++i) lambda(i) = std::max(lambda(i), 0.0);

  MarginalModel mm;
  mm.z2 = adaptation.z2;
  mm.spectrum = std::move(lambda);
  mm.rotated = u.transpose() * adaptation.z2;
  if (with_mean) {
    mm.mean_design = u.transpose() * adaptation.x2.rowwise().sum();
  }
  return mm;
}

MarginalModel build_marginal(const CoefficientContext& ctx, bool with_mean) {
  return build_marginal(ctx.adaptation, with_mean);
}

ParameterBox default_box(const MarginalModel& mm) {
  double v = mean_square(mm.z2);
  if (!(v > 0.0)) v = 1.0;
  const double lbar = mm.spectrum.size() ? mm.spectrum.mean() : 0.0;
  const double tau_scale = lbar > 0.0 ? v / lbar : v;
  return ParameterBox{1e6 * tau_scale, 1e-8 * v, 1e6 * v};
}

double marginal_nll(const MarginalModel& mm, double tau2, double sigma2, double mu) {
  const Eigen::ArrayXd var = mm.spectrum.array() * tau2 + sigma2;
  Eigen::ArrayXd e = mm.rotated.array();
  if (mm.mean_design && mu != 0.0) e -= mm.mean_design->array() * mu;
  return (e.square() / var + var.log()).sum() / static_cast<double>(mm.m());
}

PriorEstimate moment_estimate(const MarginalModel& mm, const ParameterBox& box) {
  return solve_moments(mm.rotated, mm.spectrum, box);
}

PriorEstimate moment_estimate(const MarginalModel& mm) {
  return moment_estimate(mm, default_box(mm));
}

PriorEstimate moment_estimate_with_mean(const MarginalModel& mm, const ParameterBox& box) {
  double mu = 0.0;
  Eigen::VectorXd r = mm.rotated;
  if (mm.mean_design) {
    const double dd = mm.mean_design->squaredNorm();
    if (dd > 0.0) {
      mu = mm.mean_design->dot(mm.rotated) / dd;
      r -= *mm.mean_design * mu;
    }
  }
  PriorEstimate est = solve_moments(r, mm.spectrum, box);
  est.mu = mu;
  return est;
}

PriorEstimate mle_estimate(const MarginalModel& mm, const ParameterBox& box) {
  return run_mle(mm, box, false);
}

PriorEstimate mle_estimate(const MarginalModel& mm) { return mle_estimate(mm, default_box(mm)); }

PriorEstimate mle_estimate_with_mean(const MarginalModel& mm, const ParameterBox& box) {
  if (!mm.mean_design) {
    throw InputError("mle_estimate_with_mean: marginal model was built without a mean design");
  }
  return run_mle(mm, box, true);
}

}  // namespace fabreg
