#include "fabreg/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fabreg/error.hpp"

namespace fabreg {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (std::string& f : out) {
    if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
  }
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(value);
}

std::string flags_field(const std::vector<std::string>& flags) {
  std::string out;
  for (const std::string& f : flags) {
    if (!out.empty()) out += ';';
    out += f;
  }
  return out;
}

nlohmann::json interval_json(const IntervalResult& r) {
  return {{"lower", r.lower},
          {"upper", r.upper},
          {"method", std::string(to_string(r.method))},
          {"width", r.width},
          {"solver_iters", r.solver_iters},
          {"residual", r.residual}};
}

nlohmann::json prior_json(const PriorEstimate& p) {
  nlohmann::json j = {{"mu", p.mu},
                      {"tau2", p.tau2},
                      {"sigma2", p.sigma2},
                      {"method", std::string(to_string(p.method))},
                      {"box",
                       {{"tau2_max", p.box.tau2_max},
                        {"sigma2_min", p.box.sigma2_min},
                        {"sigma2_max", p.box.sigma2_max}}},
                      {"clamped", p.clamped},
                      {"tau2_unidentified", p.tau2_unidentified},
                      {"ridge", p.ridge},
                      {"iterations", p.iterations}};
  j["objective"] = p.objective ? nlohmann::json(*p.objective) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    if (!have_header) {
      table.header = std::move(fields);
      for (const std::string& h : table.header) {
        if (h.empty()) throw InputError(source + ":" + std::to_string(line_no) + ": empty column name");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!parse_double(fields[c], row[c])) {
        throw InputError(source + ":" + std::to_string(line_no) + ": column '" +
                         table.header[c] + "' has non-numeric or non-finite value '" +
                         fields[c] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw InputError(source + ": missing header row");
  table.body.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      table.body(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

RegressionData dataset_from_csv(const CsvTable& table, const std::string& response) {
  std::size_t col = table.header.size();
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == response) {
      if (col != table.header.size()) throw InputError("response column '" + response + "' appears twice");
      col = c;
    }
  }
  if (col == table.header.size()) throw InputError("response column '" + response + "' not found");
  const Eigen::Index n = table.body.rows();
  const Eigen::Index p = table.body.cols() - 1;
  Eigen::MatrixXd x(n, p);
  std::vector<std::string> names;
  Eigen::Index k = 0;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == col) continue;
    x.col(k++) = table.body.col(static_cast<Eigen::Index>(c));
    names.push_back(table.header[c]);
  }
  return make_regression_data(table.body.col(static_cast<Eigen::Index>(col)), std::move(x),
                              std::move(names));
}

Eigen::VectorXd read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    double v = 0.0;
    if (!parse_double(t, v)) {
      if (values.empty() && line_no == 1) continue;  // header
      throw InputError(path + ":" + std::to_string(line_no) + ": not a finite number: '" + t + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw InputError(path + ": no values");
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_fit_csv(std::ostream& out, const AnalysisReport& report) {
  out << "name,estimate,umau_lo,umau_hi,fab_lo,fab_hi,rel_width,tau2,mu,flags\n";
  for (const CoefficientRecord& r : report.records) {
    out << r.name << ',' << format_double(r.beta_hat) << ',' << format_double(r.umau.lower) << ','
        << format_double(r.umau.upper) << ',' << format_double(r.fab.lower) << ','
        << format_double(r.fab.upper) << ',' << format_double(r.relative_width) << ','
        << (r.prior ? format_double(r.prior->tau2) : "") << ','
        << (r.prior ? format_double(r.prior->mu) : "") << ',' << flags_field(r.flags) << '\n';
  }
}

nlohmann::json fit_to_json(const AnalysisReport& report) {
  nlohmann::json j;
  j["schema"] = kSchemaVersion;
  j["kind"] = "fit";
  const AnalysisConfig& c = report.config;
  j["config"] = {{"alpha", c.alpha},
                 {"prior_mean", std::string(to_string(c.prior_mean_mode))},
                 {"estimator", std::string(to_string(c.estimator))},
                 {"standardize", c.standardize},
                 {"seed", c.seed},
                 {"tol", c.tol}};
  if (c.groups) {
    nlohmann::json groups = nlohmann::json::array();
    for (const ColumnGroup& g : *c.groups) groups.push_back({{"label", g.label}, {"columns", g.columns}});
    j["config"]["groups"] = groups;
  }
  j["sigma2_hat"] = report.sigma2_hat;
  j["df"] = report.df;
  j["n"] = report.n;
  j["p"] = report.p;
  j["mean_relative_width"] = report.mean_relative_width();
  nlohmann::json recs = nlohmann::json::array();
  for (const CoefficientRecord& r : report.records) {
    nlohmann::json jr = {{"column", r.column},
                         {"name", r.name},
                         {"beta_hat", r.beta_hat},
                         {"w", r.w},
                         {"umau", interval_json(r.umau)},
                         {"fab", interval_json(r.fab)},
                         {"relative_width", r.relative_width},
                         {"significant_umau", r.significant_umau},
                         {"significant_fab", r.significant_fab},
                         {"flags", r.flags}};
    if (!r.group.empty()) jr["group"] = r.group;
    jr["prior"] = r.prior ? prior_json(*r.prior) : nlohmann::json(nullptr);
    recs.push_back(std::move(jr));
  }
  j["coefficients"] = std::move(recs);
  if (!report.groups.empty()) {
    nlohmann::json groups = nlohmann::json::array();
    for (const GroupSummary& g : report.groups) {
      groups.push_back({{"label", g.label},
                        {"size", g.size},
                        {"n_effective", g.n_effective},
                        {"sigma2_hat", g.sigma2_hat},
                        {"df", g.df},
                        {"tau_min", g.tau_min},
                        {"tau_max", g.tau_max},
                        {"mean_relative_width", g.mean_relative_width}});
    }
    j["groups"] = std::move(groups);
  }
  return j;
}

void write_coverage_csv(std::ostream& out, const CoverageReport& report) {
  out << "name,column,beta0,method,hits,reps,coverage,cp_low,cp_high,mean_width\n";
  for (const CoefficientCoverage& cc : report.coefficients) {
    for (const MethodTally& t : cc.methods) {
      out << cc.name << ',' << cc.column << ',' << format_double(cc.beta0) << ','
          << to_string(t.method) << ',' << t.hits << ',' << t.reps << ','
          << format_double(t.coverage) << ',' << format_double(t.cp_low) << ','
          << format_double(t.cp_high) << ',' << format_double(t.mean_width) << '\n';
    }
  }
}

nlohmann::json coverage_to_json(const CoverageReport& report) {
  nlohmann::json j;
  j["schema"] = kSchemaVersion;
  j["kind"] = "coverage";
  j["n"] = report.n;
  j["p"] = report.p;
  j["sigma2_0"] = report.sigma2_0;
  j["alpha"] = report.alpha;
  j["seed"] = report.seed;
  j["reps_requested"] = report.reps_requested;
  j["reps_completed"] = report.reps_completed;
  nlohmann::json methods = nlohmann::json::array();
  for (IntervalMethod m : report.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = methods;
  nlohmann::json coefs = nlohmann::json::array();
  for (const CoefficientCoverage& cc : report.coefficients) {
    nlohmann::json tallies = nlohmann::json::array();
    for (const MethodTally& t : cc.methods) {
      tallies.push_back({{"method", std::string(to_string(t.method))},
                         {"hits", t.hits},
                         {"reps", t.reps},
                         {"coverage", t.coverage},
                         {"cp_low", t.cp_low},
                         {"cp_high", t.cp_high},
                         {"mean_width", t.mean_width},
                         {"max_residual", t.max_residual}});
    }
    coefs.push_back({{"column", cc.column}, {"name", cc.name}, {"beta0", cc.beta0}, {"methods", tallies}});
  }
  j["coefficients"] = std::move(coefs);
  nlohmann::json excl = nlohmann::json::array();
  for (const Exclusion& e : report.exclusions) excl.push_back({{"rep", e.rep}, {"message", e.message}});
  j["exclusions"] = std::move(excl);
  nlohmann::json rel = nlohmann::json::object();
  for (const auto& [m, v] : report.mean_relative_width) rel[std::string(to_string(m))] = v;
  j["mean_relative_width"] = std::move(rel);
  return j;
}

void write_trend_csv(std::ostream& out, const std::vector<TrendRow>& rows) {
  out << "n,p,adaptive_width,oracle_width,umau_width,gap,gap_se,reps,exclusions\n";
  for (const TrendRow& r : rows) {
    out << r.n << ',' << r.p << ',' << format_double(r.adaptive_width) << ','
        << format_double(r.oracle_width) << ',' << format_double(r.umau_width) << ','
        << format_double(r.gap) << ',' << format_double(r.gap_se) << ',' << r.reps << ','
        << r.exclusions << '\n';
  }
}

nlohmann::json trend_to_json(const TrendDesign& design, const std::vector<TrendRow>& rows) {
  nlohmann::json j;
  j["schema"] = kSchemaVersion;
  j["kind"] = "trend";
  j["design"] = {{"c", design.c},
                 {"n_grid", design.n_grid},
                 {"tau2", design.tau2},
                 {"sigma2_inf", design.sigma2_inf},
                 {"reps", design.reps},
                 {"alpha", design.alpha},
                 {"rho", design.rho},
                 {"seed", design.seed},
                 {"estimator", std::string(to_string(design.estimator))}};
  nlohmann::json out = nlohmann::json::array();
  for (const TrendRow& r : rows) {
    out.push_back({{"n", r.n},
                   {"p", r.p},
                   {"adaptive_width", r.adaptive_width},
                   {"oracle_width", r.oracle_width},
                   {"umau_width", r.umau_width},
                   {"gap", r.gap},
                   {"gap_se", r.gap_se},
                   {"reps", r.reps},
                   {"exclusions", r.exclusions}});
  }
  j["rows"] = std::move(out);
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace fabreg
