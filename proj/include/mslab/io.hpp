#pragma once

// Plain-text formats: CSV for data, labels and partitions, JSON for reports.

#include "mslab/partition.hpp"
#include "mslab/selectors.hpp"
#include "mslab/types.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace mslab {

// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

// Numeric CSV, one point per row. A first row that does not parse as numbers
// is treated as a header.
DataSet read_data_csv(std::istream& in);
DataSet read_data_csv(const std::string& path);
void write_data_csv(std::ostream& out, const DataSet& data);

// x1,...,xd,label
void write_labels_csv(std::ostream& out, const Matrix& points, const std::vector<int>& labels);

// x1,...,xd,label,mass in grid order. The grid is recovered on reading from
// the distinct coordinate values.
void write_partition_csv(std::ostream& out, const SpacePartition& partition);
SpacePartition read_partition_csv(std::istream& in);
SpacePartition read_partition_csv(const std::string& path);

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GridSpec& grid);
GridSpec grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DistanceReport& report);
nlohmann::json to_json(const SelectionResult& result, const SelectorSpec& spec);

// Writes text to a file, creating parent directories.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace mslab
