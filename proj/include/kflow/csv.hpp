#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <string>
#include <vector>

namespace kflow {

/// Shortest decimal string that parses back to exactly the same double.
std::string format_number(double value);

/// Opens path for writing, throwing Error(Io) on failure.
std::ofstream open_output(const std::string& path);

/// Writes one CSV line: values joined by ',' and terminated by '\n'.
void write_csv_row(std::ostream& out, const std::vector<double>& values);
void write_csv_header(std::ostream& out, const std::vector<std::string>& names);

/// Reads a numeric CSV with one header line; returns the header and the rows.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;
};
CsvTable read_csv(const std::string& path);

}  // namespace kflow
