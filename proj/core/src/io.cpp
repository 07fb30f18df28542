#include "longimp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "longimp/error.hpp"

namespace longimp {

Metadata Metadata::of(const Dataset& d) { return Metadata{d.shape(), d.columns()}; }

nlohmann::json to_json(const Metadata& meta) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : meta.columns) {
    nlohmann::json jc{{"name", c.name}, {"kind", to_string(c.kind)}, {"role", to_string(c.role)}};
    if (c.is_factor()) jc["levels"] = c.levels;
    cols.push_back(std::move(jc));
  }
  return nlohmann::json{{"shape", to_string(meta.shape)}, {"columns", std::move(cols)}};
}

Metadata metadata_from_json(const nlohmann::json& j) {
  Metadata meta;
  try {
    meta.shape = shape_from_string(j.value("shape", std::string("long")));
    for (const auto& jc : j.at("columns")) {
      ColumnSpec spec;
      spec.name = jc.at("name").get<std::string>();
      spec.kind = kind_from_string(jc.value("kind", std::string("continuous")));
      spec.role = role_from_string(jc.value("role", std::string("analysis")));
      if (jc.contains("levels")) spec.levels = jc.at("levels").get<std::vector<std::string>>();
      meta.columns.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("metadata: ") + e.what());
  }
  return meta;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Metadata read_metadata(const std::filesystem::path& path) {
  try {
    return metadata_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::BadConfig, "metadata '" + path.string() + "': " + e.what());
  }
}

void write_metadata(const std::filesystem::path& path, const Metadata& meta) {
  write_file_atomic(path, to_json(meta).dump(2) + "\n");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Dataset read_csv(std::istream& in, const Metadata& meta) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseCsv, "empty CSV input");
  auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> meta_index;
  for (std::size_t c = 0; c < meta.columns.size(); ++c) meta_index[meta.columns[c].name] = c;
  std::vector<std::size_t> target(header.size());
  std::vector<bool> seen(meta.columns.size(), false);
  for (std::size_t h = 0; h < header.size(); ++h) {
    auto it = meta_index.find(header[h]);
    if (it == meta_index.end()) {
      throw Error(ErrorKind::UnknownColumn, "CSV column '" + header[h] + "' has no metadata");
    }
    target[h] = it->second;
    seen[it->second] = true;
  }
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) throw Error(ErrorKind::UnknownColumn, "CSV lacks column '" + meta.columns[c].name + "'");
  }
  std::vector<std::unordered_map<std::string, double>> level_code(meta.columns.size());
  for (std::size_t c = 0; c < meta.columns.size(); ++c) {
    for (std::size_t k = 0; k < meta.columns[c].levels.size(); ++k) {
      level_code[c][meta.columns[c].levels[k]] = static_cast<double>(k);
    }
  }

  std::vector<std::vector<double>> values(meta.columns.size());
  std::vector<Mask> missing(meta.columns.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::ParseCsv, "line " + std::to_string(line_no) + " has " +
                                           std::to_string(fields.size()) + " fields, expected " +
                                           std::to_string(header.size()));
    }
    for (std::size_t h = 0; h < fields.size(); ++h) {
      const std::size_t c = target[h];
      const auto& f = fields[h];
      if (f.empty() || f == "NA") {
        values[c].push_back(missing_sentinel());
        missing[c].push_back(1);
        continue;
      }
      const auto& spec = meta.columns[c];
      if (spec.is_factor()) {
        auto it = level_code[c].find(f);
        if (it == level_code[c].end()) {
          throw Error(ErrorKind::UnknownLevel, "line " + std::to_string(line_no) + ": '" + f +
                                                   "' is not a level of '" + spec.name + "'");
        }
        values[c].push_back(it->second);
      } else {
        double v = 0.0;
        auto res = std::from_chars(f.data(), f.data() + f.size(), v);
        if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
          throw Error(ErrorKind::ParseCsv, "line " + std::to_string(line_no) + ": bad number '" + f + "'");
        }
        values[c].push_back(v);
      }
      missing[c].push_back(0);
    }
  }
  return Dataset(meta.columns, std::move(values), std::move(missing), meta.shape);
}

Dataset read_csv(const std::filesystem::path& path, const Metadata& meta) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return read_csv(in, meta);
}

void write_csv(std::ostream& out, const Dataset& d) {
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (c) out << ',';
    out << d.column(c).name;
  }
  out << '\n';
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      if (c) out << ',';
      out << d.format_cell(r, c);
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ostringstream ss;
  write_csv(ss, d);
  write_file_atomic(path, ss.str());
}

}  // namespace longimp
