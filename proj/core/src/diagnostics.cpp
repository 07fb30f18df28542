#include "longimp/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "longimp/error.hpp"
#include "longimp/io.hpp"

namespace longimp {

void ChainTrace::push(std::span<const double> row) {
  if (row.size() != names_.size()) {
    throw Error(ErrorKind::InvalidSpec, "trace row width does not match parameter count");
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

std::vector<double> ChainTrace::series(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorKind::UnknownParam, "no parameter '" + name + "' in trace");
  const auto p = static_cast<std::size_t>(it - names_.begin());
  std::vector<double> out(iterations());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i, p);
  return out;
}

void write_trace_csv(std::ostream& out, const ChainTrace& trace) {
  out << "iteration,parameter,value\n";
  const auto& names = trace.names();
  for (std::size_t i = 0; i < trace.iterations(); ++i) {
    for (std::size_t p = 0; p < names.size(); ++p) {
      out << (i + 1) << ",\"" << names[p] << "\"," << format_number(trace.at(i, p)) << '\n';
    }
  }
}

void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  write_file_atomic(path, out.str());
}

ChainTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseCsv, "empty trace CSV");
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw Error(ErrorKind::ParseCsv, "trace line " + std::to_string(line_no) + " needs 3 fields");
    std::size_t it = 0;
    double v = 0;
    auto r1 = std::from_chars(f[0].data(), f[0].data() + f[0].size(), it);
    auto r2 = std::from_chars(f[2].data(), f[2].data() + f[2].size(), v);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || it == 0) {
      throw Error(ErrorKind::ParseCsv, "bad number on trace line " + std::to_string(line_no));
    }
    auto [pos, fresh] = index.try_emplace(f[1], names.size());
    if (fresh) names.push_back(f[1]);
    if (rows.size() < it) rows.resize(it);
    auto& row = rows[it - 1];
    if (row.size() <= pos->second) row.resize(pos->second + 1, std::nan(""));
    row[pos->second] = v;
  }
  ChainTrace trace(names);
  for (auto& row : rows) {
    row.resize(names.size(), std::nan(""));
    trace.push(row);
  }
  return trace;
}

ChainTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_trace_csv(in);
}

double autocorr(std::span<const double> series, std::size_t lag) {
  const std::size_t n = series.size();
  if (lag >= n) throw Error(ErrorKind::DegenerateSeries, "lag exceeds series length");
  double mean = 0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double den = 0;
  for (double v : series) den += (v - mean) * (v - mean);
  if (!(den > 0)) throw Error(ErrorKind::DegenerateSeries, "series is constant");
  double num = 0;
  for (std::size_t t = 0; t + lag < n; ++t) num += (series[t] - mean) * (series[t + lag] - mean);
  return std::clamp(num / den, -1.0, 1.0);
}

}  // namespace longimp
