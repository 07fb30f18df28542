#include "longimp/imputed_stack.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "longimp/error.hpp"

namespace longimp {

namespace {

void write_block(std::ostream& out, const Dataset& d, std::size_t index) {
  std::ostringstream body;
  write_csv(body, d);
  std::istringstream lines(body.str());
  std::string line;
  std::getline(lines, line);  // header already written
  const std::string prefix = std::to_string(index) + ",";
  while (std::getline(lines, line)) out << prefix << line << '\n';
}

}  // namespace

void write_stacked_csv(std::ostream& out, const ImputedStack& stack) {
  out << "Imputation";
  for (const auto& c : stack.original.columns()) out << ',' << c.name;
  out << '\n';
  write_block(out, stack.original, 0);
  for (std::size_t k = 0; k < stack.imputations.size(); ++k) {
    write_block(out, stack.imputations[k], k + 1);
  }
}

void write_stacked_csv(const std::filesystem::path& path, const ImputedStack& stack) {
  std::ostringstream out;
  write_stacked_csv(out, stack);
  write_file_atomic(path, out.str());
}

ImputedStack read_stacked_csv(std::istream& in, const Metadata& meta) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorKind::ParseCsv, "empty stacked CSV");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto comma = header.find(',');
  if (header.substr(0, comma) != "Imputation" && header.substr(0, comma) != "\"Imputation\"") {
    throw Error(ErrorKind::ParseCsv, "stacked CSV must start with an Imputation column");
  }
  const std::string rest = comma == std::string::npos ? "" : header.substr(comma + 1);
  std::map<long, std::string> blocks;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto pos = line.find(',');
    long k = 0;
    try {
      std::size_t used = 0;
      k = std::stol(line.substr(0, pos), &used);
      if (used != line.substr(0, pos).size() || k < 0) throw std::invalid_argument("index");
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseCsv, "bad Imputation index on line " + std::to_string(line_no));
    }
    auto& block = blocks[k];
    if (block.empty()) block = rest + '\n';
    block += (pos == std::string::npos ? "" : line.substr(pos + 1)) + '\n';
  }
  if (!blocks.count(0)) throw Error(ErrorKind::ParseCsv, "stacked CSV lacks the original (Imputation 0)");
  ImputedStack stack;
  long expected = 0;
  for (auto& [k, text] : blocks) {
    if (k != expected++) throw Error(ErrorKind::ParseCsv, "Imputation indices are not contiguous");
    std::istringstream block(text);
    Dataset d = read_csv(block, meta);
    if (k == 0) {
      stack.original = std::move(d);
    } else {
      stack.imputations.push_back(std::move(d));
    }
  }
  return stack;
}

ImputedStack read_stacked_csv(const std::filesystem::path& path, const Metadata& meta) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_stacked_csv(in, meta);
}

}  // namespace longimp
