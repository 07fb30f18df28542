#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace longimp {

/// Per-iteration parameter values of one chain, iteration-major.
class ChainTrace {
 public:
  ChainTrace() = default;
  explicit ChainTrace(std::vector<std::string> names) : names_(std::move(names)) {}

  const std::vector<std::string>& names() const { return names_; }
  std::size_t iterations() const { return names_.empty() ? 0 : values_.size() / names_.size(); }
  void push(std::span<const double> row);
  double at(std::size_t iteration, std::size_t param) const {
    return values_[iteration * names_.size() + param];
  }

  /// Throws UnknownParam.
  std::vector<double> series(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
};

/// Long CSV: iteration,parameter,value (iterations numbered from 1).
void write_trace_csv(std::ostream& out, const ChainTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace);
ChainTrace read_trace_csv(std::istream& in);
ChainTrace read_trace_csv(const std::filesystem::path& path);

/// Lag-k sample autocorrelation. Throws DegenerateSeries for a constant
/// series or when lag >= length.
double autocorr(std::span<const double> series, std::size_t lag);

}  // namespace longimp
