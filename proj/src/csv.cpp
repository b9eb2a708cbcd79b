#include "kflow/csv.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>

#include "kflow/errors.hpp"

namespace kflow {

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", path));
  return out;
}

void write_csv_row(std::ostream& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << format_number(values[i]);
  }
  out << '\n';
}

void write_csv_header(std::ostream& out, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out << ',';
    out << names[i];
  }
  out << '\n';
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, fmt::format("'{}' is empty", path));
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw Error(ErrorCode::Io, fmt::format("bad number '{}' in '{}'", cell, path));
      row.push_back(v);
    }
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::Io, fmt::format("ragged row in '{}'", path));
    }
    rows.push_back(std::move(row));
  }
  table.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

}  // namespace kflow
