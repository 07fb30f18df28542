#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "longimp/dataset.hpp"
#include "longimp/io.hpp"

namespace longimp {

/// The incomplete input plus m completed copies of it.
struct ImputedStack {
  Dataset original;
  std::vector<Dataset> imputations;

  std::size_t m() const { return imputations.size(); }
};

/// CSV with a leading `Imputation` column: 0 is the original (missing cells
/// as NA), 1..m the completed datasets. The column metadata is that of the
/// original dataset.
void write_stacked_csv(std::ostream& out, const ImputedStack& stack);
void write_stacked_csv(const std::filesystem::path& path, const ImputedStack& stack);
ImputedStack read_stacked_csv(std::istream& in, const Metadata& meta);
ImputedStack read_stacked_csv(const std::filesystem::path& path, const Metadata& meta);

}  // namespace longimp
