#pragma once

// CSV ingestion and report serialization (CSV and JSON, schema "fabreg/1").

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fabreg/ols.hpp"
#include "fabreg/pipeline.hpp"
#include "fabreg/sim.hpp"

namespace fabreg {

inline constexpr const char* kSchemaVersion = "fabreg/1";

/// Comma-separated, mandatory header, '.' decimal point. Every body cell must
/// parse as a finite real; errors name the line and column.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd body;
};

CsvTable parse_csv(std::istream& in, const std::string& source = "<input>");
CsvTable read_csv(const std::string& path);

/// Splits the table into response and design. Throws InputError when the
/// response column is missing.
RegressionData dataset_from_csv(const CsvTable& table, const std::string& response);

/// A vector given either as a single-column CSV (header optional) or as one
/// number per line.
Eigen::VectorXd read_vector(const std::string& path);

/// Shortest text that parses back to the same double.
std::string format_double(double x);

void write_fit_csv(std::ostream& out, const AnalysisReport& report);
nlohmann::json fit_to_json(const AnalysisReport& report);

void write_coverage_csv(std::ostream& out, const CoverageReport& report);
nlohmann::json coverage_to_json(const CoverageReport& report);

void write_trend_csv(std::ostream& out, const std::vector<TrendRow>& rows);
nlohmann::json trend_to_json(const TrendDesign& design, const std::vector<TrendRow>& rows);

/// Writes `text` to `path`, throwing InputError when the file cannot be opened.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fabreg
