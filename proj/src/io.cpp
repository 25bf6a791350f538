#include "mslab/io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mslab {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

bool parse_row(const std::string& line, std::vector<double>& values) {
  values.clear();
  for (const auto& cell : split(line, ',')) {
    double v;
    if (!parse_double(cell, v)) return false;
    values.push_back(v);
  }
  return !values.empty();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  return in;
}

// Numeric rows of a CSV, skipping a leading header and blank lines.
std::vector<std::vector<double>> read_numeric_rows(std::istream& in, const char* what) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::vector<double> values;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!parse_row(line, values)) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw std::invalid_argument(std::string(what) + ": line " + std::to_string(line_no) +
                                  " is not numeric");
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw std::invalid_argument(std::string(what) + ": line " + std::to_string(line_no) +
                                  " has a different number of columns");
    }
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + ": non-finite value on line " + std::to_string(line_no));
      }
    }
    rows.push_back(values);
  }
  return rows;
}

}  // namespace

std::string format_number(double x) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, x);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buffer, ptr);
}

DataSet read_data_csv(std::istream& in) {
  const auto rows = read_numeric_rows(in, "data");
  if (rows.empty()) throw std::invalid_argument("data: no rows");
  Matrix points(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) points(i, j) = rows[i][j];
  }
  return DataSet(std::move(points));
}

DataSet read_data_csv(const std::string& path) {
  auto in = open_input(path);
  return read_data_csv(in);
}

void write_data_csv(std::ostream& out, const DataSet& data) {
  for (int k = 0; k < data.dim(); ++k) out << (k ? ",x" : "x") << k + 1;
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    for (int k = 0; k < data.dim(); ++k) out << (k ? "," : "") << format_number(data.points()(i, k));
    out << '\n';
  }
}

void write_labels_csv(std::ostream& out, const Matrix& points, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw std::invalid_argument("one label per point required");
  }
  for (Eigen::Index k = 0; k < points.cols(); ++k) out << 'x' << k + 1 << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) out << format_number(points(i, k)) << ',';
    out << labels[i] << '\n';
  }
}

void write_partition_csv(std::ostream& out, const SpacePartition& partition) {
  const GridSpec& grid = partition.grid;
  for (int k = 0; k < grid.dim(); ++k) out << 'x' << k + 1 << ',';
  out << "label,mass\n";
  for (long i = 0; i < grid.cell_count(); ++i) {
    const Vector p = grid.point(i);
    for (int k = 0; k < grid.dim(); ++k) out << format_number(p(k)) << ',';
    out << partition.labels[i] << ',' << format_number(partition.masses[i]) << '\n';
  }
}

SpacePartition read_partition_csv(std::istream& in) {
  const auto rows = read_numeric_rows(in, "partition");
  if (rows.empty()) throw std::invalid_argument("partition: no rows");
  const int cols = static_cast<int>(rows.front().size());
  if (cols < 3) throw std::invalid_argument("partition: expected x1..xd,label,mass columns");
  const int d = cols - 2;

  Vector lo(d), hi(d);
  std::set<double> distinct_first;
  for (int k = 0; k < d; ++k) {
    lo(k) = hi(k) = rows.front()[k];
  }
  for (const auto& r : rows) {
    for (int k = 0; k < d; ++k) {
      lo(k) = std::min(lo(k), r[k]);
      hi(k) = std::max(hi(k), r[k]);
    }
    distinct_first.insert(r[0]);
  }
  const GridSpec grid(lo, hi, static_cast<int>(distinct_first.size()));
  if (grid.cell_count() != static_cast<long>(rows.size())) {
    throw std::invalid_argument("partition: rows do not form a complete regular grid");
  }
  std::vector<int> labels(rows.size());
  std::vector<double> masses(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector p = grid.point(static_cast<long>(i));
    for (int k = 0; k < d; ++k) {
      if (std::abs(p(k) - rows[i][k]) > 1e-9 * grid.spacing(k)) {
        throw std::invalid_argument("partition: row " + std::to_string(i + 1) + " is out of grid order");
      }
    }
    const double label = rows[i][d];
    if (label != std::floor(label) || label < 0) {
      throw std::invalid_argument("partition: labels must be non-negative integers");
    }
    labels[i] = static_cast<int>(label);
    masses[i] = rows[i][d + 1];
  }
  return SpacePartition(grid, std::move(labels), std::move(masses));
}

SpacePartition read_partition_csv(const std::string& path) {
  auto in = open_input(path);
  return read_partition_csv(in);
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array of rows");
  const auto cols = j.front().size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw std::invalid_argument("matrix rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json to_json(const GridSpec& grid) {
  return {{"lo", std::vector<double>(grid.lo.data(), grid.lo.data() + grid.lo.size())},
          {"hi", std::vector<double>(grid.hi.data(), grid.hi.data() + grid.hi.size())},
          {"resolution", grid.resolution}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  return GridSpec(Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                  Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())),
                  j.at("resolution").get<int>());
}

nlohmann::json to_json(const DistanceReport& report) {
  return {{"distance", report.distance},
          {"matching", report.matching},
          {"total_mass", report.total_mass},
          {"leakage", 1.0 - report.total_mass},
          {"overlap", to_json(report.overlap)},
          {"symmetric_difference", to_json(report.symmetric_difference)}};
}

nlohmann::json to_json(const SelectionResult& result, const SelectorSpec& spec) {
  nlohmann::json j = {{"selector", spec.name()},
                      {"H", to_json(result.H.matrix())},
                      {"value", result.value},
                      {"evaluations", result.evaluations},
                      {"converged", result.converged}};
  if (spec.needs_pilot()) j["pilot_rule"] = spec.pilot.describe();
  if (result.pilot) j["pilot"] = to_json(*result.pilot);
  if (!result.note.empty()) j["note"] = result.note;
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace mslab
