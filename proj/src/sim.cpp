#include "fabreg/sim.hpp"

#include <algorithm>
#include <cmath>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

constexpr std::uint64_t kDesignStream = 0xD5A1;

struct Outcome {
  bool hit = false;
  double width = 0.0;
  double residual = 0.0;
};

struct RepResult {
  bool ok = false;
  std::string message;
  std::vector<Outcome> outcomes;  // p x methods, row major
};

bool has_method(const std::vector<IntervalMethod>& methods, IntervalMethod m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

Eigen::VectorXd draw_response(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                              double sigma, Rng& rng) {
  Eigen::VectorXd y = x * beta;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sample_normal(rng, 0.0, sigma);
  return y;
}

RepResult simulate_rep(const SimDesign& design, const AnalysisConfig& cfg, double oracle_tau2,
                       std::size_t rep) {
  RepResult out;
  const std::size_t p = static_cast<std::size_t>(design.x.cols());
  const std::size_t k = design.methods.size();
  const double sigma0 = std::sqrt(design.sigma2_0);
  try {
    Rng rng = Rng(design.seed).substream(rep);
    RegressionData data = make_regression_data(draw_response(design.x, design.beta0, sigma0, rng),
                                               design.x, design.names);
    std::optional<AnalysisReport> report;
    if (has_method(design.methods, IntervalMethod::fab_t)) report = analyze(data, cfg);
    const OlsFit fit = fit_ols(data);

    out.outcomes.resize(p * k);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t m = 0; m < k; ++m) {
        IntervalResult iv;
        switch (design.methods[m]) {
          case IntervalMethod::umau:
            iv = umau_interval(fit.beta_hat(j), fit.w(j), fit.sigma_hat(), fit.df, cfg.alpha);
            break;
          case IntervalMethod::fab_t:
            iv = report->records[j].fab;
            break;
          case IntervalMethod::fab_z_oracle: {
            SpendingSpec spec;
            spec.mu = 0.0;
            spec.tau2 = oracle_tau2;
            spec.sigma = sigma0;
            spec.w = fit.w(j);
            spec.alpha = cfg.alpha;
            iv = fab_interval_z(fit.beta_hat(j), spec, cfg.tol);
            break;
          }
        }
        out.outcomes[j * k + m] = {iv.contains(design.beta0(j)), iv.width, iv.residual};
      }
    }
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.message = e.what();
    out.outcomes.clear();
  }
  return out;
}

}  // namespace

Eigen::MatrixXd generate_design(std::size_t n, std::size_t p, double rho, std::uint64_t seed) {
  if (n == 0 || p == 0) throw InputError("generate_design: n and p must be positive");
  const double lower = p > 1 ? -1.0 / static_cast<double>(p - 1) : -1.0;
  if (!(rho > lower && rho < 1.0)) {
    throw InputError("generate_design: rho must lie in (" + std::to_string(lower) + ", 1)");
  }
  Rng rng = Rng(seed).substream(kDesignStream);
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = sample_normal(rng, 0.0, 1.0);
  }
  if (rho == 0.0) return z;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(p, p, rho);
  corr.diagonal().setOnes();
  const Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) throw NumericError("generate_design: correlation not PD");
  const Eigen::MatrixXd l = llt.matrixL();
  return z * l.transpose();
}

void SimDesign::validate() const {
  if (x.rows() == 0 || x.cols() == 0) throw InputError("design matrix is empty");
  if (beta0.size() != x.cols()) {
    throw InputError("beta0 has length " + std::to_string(beta0.size()) + " but the design has " +
                     std::to_string(x.cols()) + " columns");
  }
  if (!(sigma2_0 > 0.0) || !std::isfinite(sigma2_0)) throw InputError("sigma2 must be positive");
  if (reps < 1) throw InputError("reps must be at least 1");
  if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("alpha must lie in (0, 0.5)");
  if (methods.empty()) throw InputError("at least one method is required");
  if (oracle_tau2 && !(*oracle_tau2 >= 0.0)) throw InputError("oracle tau2 must be >= 0");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != x.cols()) {
    throw InputError("names must match the number of columns");
  }
}

CoverageReport run_study(const SimDesign& design) {
  design.validate();
  const std::size_t p = static_cast<std::size_t>(design.x.cols());
  const std::size_t k = design.methods.size();

  AnalysisConfig cfg;
  cfg.alpha = design.alpha;
  cfg.estimator = design.estimator;
  cfg.prior_mean_mode = design.prior_mean_mode;
  cfg.threads = 1;
  const double oracle_tau2 = design.oracle_tau2.value_or(
      design.beta0.squaredNorm() / static_cast<double>(design.beta0.size()));

  std::vector<RepResult> results(design.reps);
  parallel_for(design.reps, design.threads, [&](std::size_t rep) {
    results[rep] = simulate_rep(design, cfg, oracle_tau2, rep);
  });

  CoverageReport report;
  report.n = static_cast<std::size_t>(design.x.rows());
  report.p = p;
  report.sigma2_0 = design.sigma2_0;
  report.alpha = design.alpha;
  report.seed = design.seed;
  report.reps_requested = design.reps;
  report.methods = design.methods;

  std::vector<double> width_sum(p * k, 0.0);
  std::vector<std::size_t> hits(p * k, 0);
  std::vector<double> max_res(p * k, 0.0);
  for (std::size_t rep = 0; rep < design.reps; ++rep) {
    const RepResult& r = results[rep];
    if (!r.ok) {
      report.exclusions.push_back({rep, r.message});
      continue;
    }
    ++report.reps_completed;
    for (std::size_t i = 0; i < p * k; ++i) {
      hits[i] += r.outcomes[i].hit ? 1 : 0;
      width_sum[i] += r.outcomes[i].width;
      max_res[i] = std::max(max_res[i], r.outcomes[i].residual);
    }
  }

  const std::size_t done = report.reps_completed;
  for (std::size_t j = 0; j < p; ++j) {
    CoefficientCoverage cc;
    cc.column = j;
    cc.name = design.names.empty() ? "x" + std::to_string(j + 1) : design.names[j];
    cc.beta0 = design.beta0(j);
    for (std::size_t m = 0; m < k; ++m) {
      MethodTally t;
      t.method = design.methods[m];
      t.reps = done;
      t.hits = hits[j * k + m];
      t.max_residual = max_res[j * k + m];
      if (done > 0) {
        t.coverage = static_cast<double>(t.hits) / static_cast<double>(done);
        t.mean_width = width_sum[j * k + m] / static_cast<double>(done);
        const BinomialInterval cp = clopper_pearson(t.hits, done, 0.95);
        t.cp_low = cp.lower;
        t.cp_high = cp.upper;
      }
      cc.methods.push_back(t);
    }
    report.coefficients.push_back(std::move(cc));
  }

  const auto umau_pos = std::find(design.methods.begin(), design.methods.end(),
                                  IntervalMethod::umau);
  if (umau_pos != design.methods.end() && done > 0) {
    const std::size_t u = static_cast<std::size_t>(umau_pos - design.methods.begin());
    for (std::size_t m = 0; m < k; ++m) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const CoefficientCoverage& cc : report.coefficients) {
        if (cc.methods[u].mean_width > 0.0) {
          sum += cc.methods[m].mean_width / cc.methods[u].mean_width;
          ++count;
        }
      }
      report.mean_relative_width.emplace_back(design.methods[m],
                                              count ? sum / static_cast<double>(count) : 1.0);
    }
  }
  return report;
}

void TrendDesign::validate() const {
  if (!(c > 0.0 && c < 1.0)) throw InputError("c must lie in (0, 1)");
  if (n_grid.empty()) throw InputError("n_grid is empty");
  for (std::size_t n : n_grid) {
    const auto p = static_cast<std::size_t>(std::ceil(c * static_cast<double>(n)));
    if (p < 2 || p + 1 >= n) {
      throw InputError("n = " + std::to_string(n) + " gives p = " + std::to_string(p) +
                       "; need 2 <= p < n - 1");
    }
  }
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw InputError("tau2 must be finite and >= 0");
  if (!(sigma2_inf > 0.0)) throw InputError("sigma2_inf must be positive");
  if (reps < 2) throw InputError("reps must be at least 2");
  if (!(alpha > 0.0 && alpha < 0.5)) throw InputError("alpha must lie in (0, 0.5)");
}

std::vector<TrendRow> width_convergence_study(const TrendDesign& design) {
  design.validate();
  AnalysisConfig cfg;
  cfg.alpha = design.alpha;
  cfg.estimator = design.estimator;
  cfg.threads = 1;

  std::vector<TrendRow> rows;
  for (std::size_t cell = 0; cell < design.n_grid.size(); ++cell) {
    const std::size_t n = design.n_grid[cell];
    const auto p = static_cast<std::size_t>(std::ceil(design.c * static_cast<double>(n)));
    const double sigma2 = static_cast<double>(n) * design.sigma2_inf;
    const double sigma = std::sqrt(sigma2);
    const Rng cell_rng = Rng(design.seed).substream(cell);
    const Eigen::MatrixXd x = generate_design(n, p, design.rho, cell_rng.substream(0)());

    struct Widths {
      bool ok = false;
      double adaptive = 0.0, oracle = 0.0, umau = 0.0;
    };
    std::vector<Widths> per_rep(design.reps);
    parallel_for(design.reps, design.threads, [&](std::size_t rep) {
      Widths w;
      try {
        Rng rng = cell_rng.substream(rep + 1);
        Eigen::VectorXd beta(p);
        const double tau = std::sqrt(design.tau2);
        for (std::size_t j = 0; j < p; ++j) {
          beta(j) = design.tau2 > 0.0 ? sample_normal(rng, 0.0, tau) : 0.0;
        }
        const RegressionData data = make_regression_data(draw_response(x, beta, sigma, rng), x);
        const AnalysisReport report = analyze(data, cfg);
        for (const CoefficientRecord& rec : report.records) {
          SpendingSpec spec;
          spec.tau2 = design.tau2;
          spec.sigma = sigma;
          spec.w = rec.w;
          spec.alpha = design.alpha;
          w.adaptive += rec.fab.width;
          w.umau += rec.umau.width;
          w.oracle += fab_interval_z(rec.beta_hat, spec, cfg.tol).width;
        }
        const double inv_p = 1.0 / static_cast<double>(p);
        w.adaptive *= inv_p;
        w.umau *= inv_p;
        w.oracle *= inv_p;
        w.ok = true;
      } catch (const Error&) {
        w.ok = false;
      }
      per_rep[rep] = w;
    });

    TrendRow row;
    row.n = n;
    row.p = p;
    double gap_sq = 0.0;
    for (const Widths& w : per_rep) {
      if (!w.ok) {
        ++row.exclusions;
        continue;
      }
      ++row.reps;
      row.adaptive_width += w.adaptive;
      row.oracle_width += w.oracle;
      row.umau_width += w.umau;
      const double g = w.adaptive - w.oracle;
      row.gap += g;
      gap_sq += g * g;
    }
    if (row.reps > 0) {
      const double r = static_cast<double>(row.reps);
      row.adaptive_width /= r;
      row.oracle_width /= r;
      row.umau_width /= r;
      row.gap /= r;
      if (row.reps > 1) {
        const double var = std::max(0.0, (gap_sq - r * row.gap * row.gap) / (r - 1.0));
        row.gap_se = std::sqrt(var / r);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace fabreg
