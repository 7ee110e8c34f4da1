// fabreg: adaptive FAB confidence intervals for regression coefficients.
//
// Exit codes: 0 success, 2 invalid input or flags, 3 numerical failure.
// Errors are reported on stderr as a single line:
//   fabreg: error kind=<validation|numeric> flag=<--name|-> msg=<text>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fabreg/error.hpp"
#include "fabreg/io.hpp"
#include "fabreg/pipeline.hpp"
#include "fabreg/sim.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct FlagError {
  std::string flag;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report_error(const char* kind, const std::string& flag, const std::string& msg, int code) {
  std::cerr << "fabreg: error kind=" << kind << " flag=" << (flag.empty() ? "-" : flag)
            << " msg=" << one_line(msg) << '\n';
  return code;
}

struct CommonOptions {
  double alpha = 0.05;
  std::string prior_mean = "zero";
  std::string estimator = "mle";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

void add_alpha(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--alpha", o.alpha, "Error rate in (0, 0.5)")->capture_default_str();
}

void add_estimation(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--prior-mean", o.prior_mean, "Prior mean: zero | estimate")
      ->capture_default_str();
  cmd->add_option("--estimator", o.estimator, "Prior estimator: mle | moment")
      ->capture_default_str();
}

void add_run(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "64-bit seed (falls back to $FABREG_SEED, then 0)");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
  cmd->add_option("--out", o.out, "Output path prefix; writes <out>.csv and <out>.json")
      ->required();
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw FlagError{"--alpha", "must lie in (0, 0.5), got " + std::to_string(alpha)};
  }
}

fabreg::PriorMethod parse_estimator(const std::string& s) {
  if (s == "mle") return fabreg::PriorMethod::mle;
  if (s == "moment") return fabreg::PriorMethod::moment;
  throw FlagError{"--estimator", "expected mle or moment, got '" + s + "'"};
}

fabreg::PriorMeanMode parse_prior_mean(const std::string& s) {
  if (s == "zero") return fabreg::PriorMeanMode::zero;
  if (s == "estimate" || s == "estimated") return fabreg::PriorMeanMode::estimated;
  throw FlagError{"--prior-mean", "expected zero or estimate, got '" + s + "'"};
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FABREG_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used, 0);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw FlagError{"FABREG_SEED", std::string("not an unsigned 64-bit integer: '") + env + "'"};
  }
  return 0;
}

fabreg::AnalysisConfig make_config(const CommonOptions& o) {
  check_alpha(o.alpha);
  fabreg::AnalysisConfig cfg;
  cfg.alpha = o.alpha;
  cfg.estimator = parse_estimator(o.estimator);
  cfg.prior_mean_mode = parse_prior_mean(o.prior_mean);
  cfg.seed = resolve_seed(o.seed);
  cfg.threads = o.threads;
  return cfg;
}

void write_outputs(const std::string& prefix, const std::string& csv, const nlohmann::json& json) {
  fabreg::write_text_file(prefix + ".csv", csv);
  fabreg::write_text_file(prefix + ".json", json.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "label=a,b,c" or "a,b,c"; entries are column names or 1-based indices.
fabreg::ColumnGroup parse_group(const std::string& spec, const fabreg::RegressionData& data,
                                std::size_t ordinal) {
  fabreg::ColumnGroup g;
  std::string body = spec;
  const std::size_t eq = spec.find('=');
  if (eq != std::string::npos) {
    g.label = spec.substr(0, eq);
    body = spec.substr(eq + 1);
  } else {
    g.label = "group" + std::to_string(ordinal + 1);
  }
  for (const std::string& item : split_list(body)) {
    std::size_t col = data.p();
    for (std::size_t c = 0; c < data.p(); ++c) {
      if (data.names[c] == item) col = c;
    }
    if (col == data.p()) {
      try {
        std::size_t used = 0;
        const unsigned long idx = std::stoul(item, &used);
        if (used == item.size() && idx >= 1 && idx <= data.p()) col = idx - 1;
      } catch (const std::exception&) {
      }
    }
    if (col == data.p()) throw FlagError{"--group", "unknown column '" + item + "'"};
    g.columns.push_back(col);
  }
  if (g.columns.empty()) throw FlagError{"--group", "group '" + g.label + "' is empty"};
  return g;
}

std::vector<fabreg::IntervalMethod> parse_methods(const std::string& s) {
  std::vector<fabreg::IntervalMethod> out;
  for (const std::string& m : split_list(s)) {
    fabreg::IntervalMethod method;
    if (m == "umau") {
      method = fabreg::IntervalMethod::umau;
    } else if (m == "fab" || m == "fab_t") {
      method = fabreg::IntervalMethod::fab_t;
    } else if (m == "oracle" || m == "fab_z_oracle") {
      method = fabreg::IntervalMethod::fab_z_oracle;
    } else {
      throw FlagError{"--methods", "unknown method '" + m + "' (umau, fab_t, fab_z_oracle)"};
    }
    if (std::find(out.begin(), out.end(), method) == out.end()) out.push_back(method);
  }
  if (out.empty()) throw FlagError{"--methods", "no methods given"};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive FAB confidence intervals for linear-regression coefficients"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fabreg 1.0");

  // fit / fit-grouped
  CommonOptions fit_opts;
  std::string data_path, response;
  bool standardize = false;
  std::vector<std::string> group_specs;
  auto add_fit_flags = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_path, "CSV file with a header row")->required();
    cmd->add_option("--response", response, "Name of the response column")->required();
    add_alpha(cmd, fit_opts);
    add_estimation(cmd, fit_opts);
    cmd->add_flag("--standardize", standardize, "Centre and scale columns, centre the response");
    add_run(cmd, fit_opts);
  };
  CLI::App* fit = app.add_subcommand("fit", "FAB and UMAU intervals for every coefficient");
  add_fit_flags(fit);
  CLI::App* fit_grouped =
      app.add_subcommand("fit-grouped", "Adapt separately within groups of columns");
  add_fit_flags(fit_grouped);
  fit_grouped
      ->add_option("--group", group_specs,
                   "Column group 'label=a,b,c' (names or 1-based indices); repeat per group")
      ->required();

  // simulate
  CommonOptions sim_opts;
  std::optional<std::size_t> sim_n, sim_p;
  std::string sim_data, sim_beta0 = "zero", methods = "umau,fab_t";
  double sigma2 = 1.0, rho = 0.0;
  std::optional<double> oracle_tau2;
  std::size_t reps = 1000;
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo coverage study");
  simulate->add_option("--n", sim_n, "Rows of the generated design");
  simulate->add_option("--p", sim_p, "Columns of the generated design");
  simulate->add_option("--rho", rho, "Column correlation of the generated design")
      ->capture_default_str();
  simulate->add_option("--data", sim_data, "CSV design to freeze instead of generating one");
  simulate->add_option("--beta0", sim_beta0, "True coefficients: a file path or 'zero'")
      ->capture_default_str();
  simulate->add_option("--sigma2", sigma2, "True error variance")->capture_default_str();
  simulate->add_option("--reps", reps, "Replications")->capture_default_str();
  simulate->add_option("--methods", methods, "Comma list of umau, fab_t, fab_z_oracle")
      ->capture_default_str();
  simulate->add_option("--oracle-tau2", oracle_tau2,
                       "Prior variance for the oracle interval (default mean(beta0^2))");
  add_alpha(simulate, sim_opts);
  add_estimation(simulate, sim_opts);
  add_run(simulate, sim_opts);

  // trend
  CommonOptions trend_opts;
  fabreg::TrendDesign trend_design;
  std::string n_grid = "50,100,200,400";
  CLI::App* trend = app.add_subcommand("trend", "Adaptive-vs-oracle width gap as n grows");
  trend->add_option("--c", trend_design.c, "Ratio p/n in (0, 1)")->capture_default_str();
  trend->add_option("--n-grid", n_grid, "Comma list of sample sizes")->capture_default_str();
  trend->add_option("--tau2", trend_design.tau2, "Prior variance of the coefficients")
      ->capture_default_str();
  trend->add_option("--sigma2-inf", trend_design.sigma2_inf, "sigma2 / n")->capture_default_str();
  trend->add_option("--reps", trend_design.reps, "Replications per n")->capture_default_str();
  trend->add_option("--rho", trend_design.rho, "Column correlation")->capture_default_str();
  add_alpha(trend, trend_opts);
  trend_opts.prior_mean = "zero";
  trend->add_option("--estimator", trend_opts.estimator, "Prior estimator: mle | moment")
      ->capture_default_str();
  add_run(trend, trend_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << "fabreg 1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string flag;
    const std::string what = e.what();
    const std::size_t dash = what.find("--");
    if (dash != std::string::npos) {
      const std::size_t end = what.find_first_of(" :,=", dash);
      flag = what.substr(dash, end == std::string::npos ? std::string::npos : end - dash);
    }
    return report_error("validation", flag, e.get_name() + ": " + what, kExitValidation);
  }

  try {
    if (fit->parsed() || fit_grouped->parsed()) {
      fabreg::AnalysisConfig cfg = make_config(fit_opts);
      cfg.standardize = standardize;
      const fabreg::RegressionData data =
          fabreg::dataset_from_csv(fabreg::read_csv(data_path), response);
      fabreg::AnalysisReport report;
      if (fit_grouped->parsed()) {
        std::vector<fabreg::ColumnGroup> groups;
        for (std::size_t k = 0; k < group_specs.size(); ++k) {
          groups.push_back(parse_group(group_specs[k], data, k));
        }
        cfg.groups = std::move(groups);
        report = fabreg::analyze_grouped(data, cfg);
      } else {
        report = fabreg::analyze(data, cfg);
      }
      std::ostringstream csv;
      fabreg::write_fit_csv(csv, report);
      write_outputs(fit_opts.out, csv.str(), fabreg::fit_to_json(report));
      return 0;
    }

    if (simulate->parsed()) {
      const fabreg::AnalysisConfig cfg = make_config(sim_opts);
      fabreg::SimDesign design;
      if (!sim_data.empty()) {
        if (sim_n || sim_p) throw FlagError{"--data", "give either --data or --n/--p, not both"};
        const fabreg::CsvTable table = fabreg::read_csv(sim_data);
        design.x = table.body;
        design.names = table.header;
      } else {
        if (!sim_n || !sim_p) throw FlagError{"--n", "--n and --p are required without --data"};
        if (*sim_p < 1 || *sim_n <= *sim_p) {
          throw FlagError{"--p", "need n > p >= 1, got n = " + std::to_string(*sim_n) +
                                     ", p = " + std::to_string(*sim_p)};
        }
        design.x = fabreg::generate_design(*sim_n, *sim_p, rho, cfg.seed);
      }
      if (sim_beta0 == "zero") {
        design.beta0 = Eigen::VectorXd::Zero(design.x.cols());
      } else {
        design.beta0 = fabreg::read_vector(sim_beta0);
        if (design.beta0.size() != design.x.cols()) {
          throw FlagError{"--beta0", "has " + std::to_string(design.beta0.size()) +
                                         " values but the design has " +
                                         std::to_string(design.x.cols()) + " columns"};
        }
      }
      if (!(sigma2 > 0.0)) throw FlagError{"--sigma2", "must be positive"};
      if (reps < 1) throw FlagError{"--reps", "must be at least 1"};
      design.sigma2_0 = sigma2;
      design.reps = reps;
      design.alpha = cfg.alpha;
      design.methods = parse_methods(methods);
      design.seed = cfg.seed;
      design.oracle_tau2 = oracle_tau2;
      design.estimator = cfg.estimator;
      design.prior_mean_mode = cfg.prior_mean_mode;
      design.threads = cfg.threads;
      const fabreg::CoverageReport report = fabreg::run_study(design);
      std::ostringstream csv;
      fabreg::write_coverage_csv(csv, report);
      write_outputs(sim_opts.out, csv.str(), fabreg::coverage_to_json(report));
      return report.exclusions.empty() ? 0 : kExitNumeric;
    }

    if (trend->parsed()) {
      const fabreg::AnalysisConfig cfg = make_config(trend_opts);
      trend_design.n_grid.clear();
      for (const std::string& item : split_list(n_grid)) {
        try {
          std::size_t used = 0;
          const unsigned long v = std::stoul(item, &used);
          if (used != item.size()) throw std::invalid_argument(item);
          trend_design.n_grid.push_back(v);
        } catch (const std::exception&) {
          throw FlagError{"--n-grid", "not a positive integer: '" + item + "'"};
        }
      }
      trend_design.alpha = cfg.alpha;
      trend_design.seed = cfg.seed;
      trend_design.estimator = cfg.estimator;
      trend_design.threads = cfg.threads;
      const std::vector<fabreg::TrendRow> rows = fabreg::width_convergence_study(trend_design);
      std::ostringstream csv;
      fabreg::write_trend_csv(csv, rows);
      write_outputs(trend_opts.out, csv.str(), fabreg::trend_to_json(trend_design, rows));
      return 0;
    }
  } catch (const FlagError& e) {
    return report_error("validation", e.flag, e.message, kExitValidation);
  } catch (const fabreg::InputError& e) {
    return report_error("validation", "", e.what(), kExitValidation);
  } catch (const fabreg::DomainError& e) {
    return report_error("validation", "", e.what(), kExitValidation);
  } catch (const std::exception& e) {
    return report_error("numeric", "", e.what(), kExitNumeric);
  }
  return 0;
}
