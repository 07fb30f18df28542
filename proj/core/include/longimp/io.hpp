#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "longimp/dataset.hpp"

namespace longimp {

/// Column metadata sidecar: {"shape": "long", "columns": [{name, kind, levels, role}]}.
struct Metadata {
  Shape shape = Shape::Long;
  std::vector<ColumnSpec> columns;

  static Metadata of(const Dataset& d);
};

nlohmann::json to_json(const Metadata& meta);
Metadata metadata_from_json(const nlohmann::json& j);
Metadata read_metadata(const std::filesystem::path& path);
void write_metadata(const std::filesystem::path& path, const Metadata& meta);

/// Reads a CSV with a header row. Empty fields and "NA" are missing. Factor
/// cells are level labels. Columns are reordered to the metadata order;
/// extra CSV columns are an error.
Dataset read_csv(std::istream& in, const Metadata& meta);
Dataset read_csv(const std::filesystem::path& path, const Metadata& meta);

/// Writes the header and cells in column order; missing cells as "NA".
void write_csv(std::ostream& out, const Dataset& d);
void write_csv(const std::filesystem::path& path, const Dataset& d);

/// Shortest round-trip decimal representation.
std::string format_number(double v);

/// Writes `content` to a sibling temp file, then renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace longimp
