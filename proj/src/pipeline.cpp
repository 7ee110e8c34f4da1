#include "fabreg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

double round4(double x) { return std::round(x * 1e4) / 1e4; }

// Rethrows the in-flight exception with `prefix` prepended, keeping the
// category the CLI uses to choose an exit code.
[[noreturn]] void rethrow_annotated(const std::string& prefix) {
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const EmptyContextError& e) {
    throw EmptyContextError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

PriorEstimate estimate_prior(const MarginalModel& mm, PriorMethod method, bool with_mean) {
  const ParameterBox box = default_box(mm);
  if (method == PriorMethod::moment) {
    return with_mean ? moment_estimate_with_mean(mm, box) : moment_estimate(mm, box);
  }
  return with_mean ? mle_estimate_with_mean(mm, box) : mle_estimate(mm, box);
}

void add_prior_flags(const PriorEstimate& prior, std::vector<std::string>& flags) {
  if (prior.clamped) flags.emplace_back("clamped");
  if (prior.tau2_unidentified) flags.emplace_back("tau2_unidentified");
  if (prior.ridge) flags.emplace_back("ridge");
}

CoefficientRecord analyze_coefficient(const RegressionData& data, const OlsFit& fit,
                                      std::size_t j, const AnalysisConfig& cfg) {
  CoefficientRecord rec;
  rec.column = j;
  rec.name = data.names[j];
  rec.beta_hat = fit.beta_hat(j);
  rec.w = fit.w(j);
  const double sigma_hat = fit.sigma_hat();
  rec.umau = umau_interval(rec.beta_hat, rec.w, sigma_hat, fit.df, cfg.alpha);

  const CoefficientContext ctx = coefficient_context(data, fit, j);
  if (ctx.adaptation.empty()) {
    rec.fab = rec.umau;
    rec.flags.emplace_back("empty_context");
  } else {
    const AdaptiveSpec as = build_spending_spec(ctx.adaptation, ctx.w, cfg);
    rec.prior = as.prior;
    add_prior_flags(as.prior, rec.flags);
    if (as.mean_fallback) rec.flags.emplace_back("mean_fallback");
    if (as.spec.is_step()) rec.flags.emplace_back("step_spending");
    if (sigma_hat > 0.0) {
      rec.fab = fab_interval_t(rec.beta_hat, sigma_hat, fit.df, as.spec, cfg.tol);
    } else {
      // Exact fit: every interval collapses onto beta_hat.
      rec.fab = rec.umau;
      rec.fab.method = IntervalMethod::fab_t;
      rec.flags.emplace_back("zero_residual_variance");
    }
  }
  rec.relative_width = rec.umau.width > 0.0 ? round4(rec.fab.width / rec.umau.width) : 1.0;
  rec.significant_umau = !rec.umau.contains(0.0);
  rec.significant_fab = !rec.fab.contains(0.0);
  return rec;
}

void check_partition(const std::vector<ColumnGroup>& groups, std::size_t p) {
  std::vector<int> seen(p, 0);
  for (const ColumnGroup& g : groups) {
    if (g.columns.empty()) throw InputError("group '" + g.label + "' is empty");
    for (std::size_t c : g.columns) {
      if (c >= p) {
        throw InputError("group '" + g.label + "' references column " + std::to_string(c) +
                         " but the design has " + std::to_string(p) + " columns");
      }
      if (seen[c]++) throw InputError("column " + std::to_string(c) + " appears in two groups");
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    if (!seen[c]) throw InputError("groups must cover every column; column " +
                                   std::to_string(c) + " is missing");
  }
}

}  // namespace

std::string_view to_string(PriorMeanMode mode) {
  return mode == PriorMeanMode::zero ? "ZERO" : "ESTIMATED";
}

void AnalysisConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw InputError("alpha must lie in (0, 0.5), got " + std::to_string(alpha));
  }
  if (!(tol > 0.0) || !std::isfinite(tol)) throw InputError("tol must be positive and finite");
}

double AnalysisReport::mean_relative_width() const {
  if (records.empty()) return 1.0;
  double sum = 0.0;
  for (const CoefficientRecord& r : records) sum += r.relative_width;
  return sum / static_cast<double>(records.size());
}

AdaptiveSpec build_spending_spec(const AdaptationData& adaptation, double w,
                                 const AnalysisConfig& cfg) {
  const bool with_mean = cfg.prior_mean_mode == PriorMeanMode::estimated;
  const MarginalModel mm = build_marginal(adaptation, with_mean);
  AdaptiveSpec out;
  if (with_mean && cfg.estimator == PriorMethod::mle) {
    try {
      out.prior = estimate_prior(mm, cfg.estimator, true);
    } catch (const OptimizerError&) {
      out.prior = estimate_prior(mm, cfg.estimator, false);
      out.mean_fallback = true;
    }
  } else {
    out.prior = estimate_prior(mm, cfg.estimator, with_mean);
  }
  out.spec.mu = out.prior.mu;
  out.spec.tau2 = out.prior.tau2;
  out.spec.sigma = std::sqrt(out.prior.sigma2);
  out.spec.w = w;
  out.spec.alpha = cfg.alpha;
  out.spec.validate();
  return out;
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

AnalysisReport analyze(const RegressionData& input, const AnalysisConfig& cfg) {
  cfg.validate();
  const RegressionData data =
      cfg.standardize && !input.standardized ? standardize(input) : input;
  const OlsFit fit = fit_ols(data);

  AnalysisReport report;
  report.sigma2_hat = fit.sigma2_hat;
  report.df = static_cast<std::size_t>(fit.df.value());
  report.n = data.n();
  report.p = data.p();
  report.config = cfg;
  report.records.resize(data.p());
  parallel_for(data.p(), cfg.threads, [&](std::size_t j) {
    try {
      report.records[j] = analyze_coefficient(data, fit, j, cfg);
    } catch (const Error&) {
      rethrow_annotated("coefficient '" + data.names[j] + "': ");
    }
  });
  return report;
}

AnalysisReport analyze_grouped(const RegressionData& input, const AnalysisConfig& cfg) {
  cfg.validate();
  if (!cfg.groups || cfg.groups->empty()) {
    throw InputError("analyze_grouped requires at least one column group");
  }
  const RegressionData data =
      cfg.standardize && !input.standardized ? standardize(input) : input;
  check_partition(*cfg.groups, data.p());
  const OlsFit full = fit_ols(data);

  AnalysisConfig inner = cfg;
  inner.groups.reset();
  inner.standardize = false;

  AnalysisReport report;
  report.sigma2_hat = full.sigma2_hat;
  report.df = static_cast<std::size_t>(full.df.value());
  report.n = data.n();
  report.p = data.p();
  report.config = cfg;

  for (const ColumnGroup& group : *cfg.groups) {
    RegressionData restricted;
    try {
      restricted = null_space_restrict(data, group.columns);
    } catch (const Error&) {
      rethrow_annotated("group '" + group.label + "': ");
    }
    const AnalysisReport sub = analyze(restricted, inner);
    GroupSummary summary;
    summary.label = group.label;
    summary.size = group.columns.size();
    summary.n_effective = sub.n;
    summary.sigma2_hat = sub.sigma2_hat;
    summary.df = sub.df;
    summary.tau_min = std::numeric_limits<double>::infinity();
    summary.tau_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sub.records.size(); ++k) {
      CoefficientRecord rec = sub.records[k];
      rec.column = group.columns[k];
      rec.group = group.label;
      if (rec.prior) {
        const double tau = std::sqrt(rec.prior->tau2);
        summary.tau_min = std::min(summary.tau_min, tau);
        summary.tau_max = std::max(summary.tau_max, tau);
      }
      report.records.push_back(std::move(rec));
    }
    if (summary.tau_min > summary.tau_max) summary.tau_min = summary.tau_max = 0.0;
    summary.mean_relative_width = sub.mean_relative_width();
    report.groups.push_back(summary);
  }
  std::sort(report.records.begin(), report.records.end(),
            [](const CoefficientRecord& a, const CoefficientRecord& b) {
              return a.column < b.column;
            });
  return report;
}

}  // namespace fabreg
