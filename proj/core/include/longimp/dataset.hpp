#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace longimp {

enum class Kind { Continuous, Binary, Categorical };
enum class Role { UnitId, ClusterId, Time, Analysis, Auxiliary };
enum class Shape { Wide, Long };

std::string to_string(Kind kind);
std::string to_string(Role role);
std::string to_string(Shape shape);
Kind kind_from_string(const std::string& text);
Role role_from_string(const std::string& text);
Shape shape_from_string(const std::string& text);

struct ColumnSpec {
  std::string name;
  Kind kind = Kind::Continuous;
  std::vector<std::string> levels;  // binary: exactly 2, categorical: >= 2
  Role role = Role::Analysis;

  bool is_factor() const { return kind != Kind::Continuous; }
  bool is_structural() const {
    return role == Role::UnitId || role == Role::ClusterId || role == Role::Time;
  }

  static ColumnSpec continuous(std::string name, Role role = Role::Analysis);
  static ColumnSpec binary(std::string name, Role role = Role::Analysis,
                           std::vector<std::string> levels = {"0", "1"});
  static ColumnSpec categorical(std::string name, std::vector<std::string> levels,
                                Role role = Role::Analysis);

  bool operator==(const ColumnSpec&) const = default;
};

/// Missing cells are tracked by an explicit mask; the stored value of a
/// masked cell is always the quiet-NaN sentinel. Factor cells store the
/// zero-based level index.
using Mask = std::vector<std::uint8_t>;

/// Immutable columnar table. Every transformation returns a new Dataset.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<ColumnSpec> columns, std::vector<std::vector<double>> values,
          std::vector<Mask> missing, Shape shape);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }
  Shape shape() const { return shape_; }

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(std::size_t c) const { return columns_.at(c); }
  std::vector<std::string> column_names() const;

  /// Throws UnknownColumn.
  std::size_t index_of(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  bool has_column(const std::string& name) const { return find(name).has_value(); }

  double value(std::size_t row, std::size_t col) const { return values_[col][row]; }
  bool is_missing(std::size_t row, std::size_t col) const { return missing_[col][row] != 0; }
  std::span<const double> values(std::size_t col) const { return values_.at(col); }
  std::span<const std::uint8_t> mask(std::size_t col) const { return missing_.at(col); }
  std::size_t missing_count(std::size_t col) const;
  bool column_complete(std::size_t col) const { return missing_count(col) == 0; }

  std::size_t unit_id_column() const;
  std::optional<std::size_t> cluster_id_column() const;
  std::optional<std::size_t> time_column() const;

  /// Label of a factor cell, or the shortest round-trip decimal otherwise.
  std::string format_cell(std::size_t row, std::size_t col) const;

  /// An empty mask is derived from the NaN cells of `values`.
  Dataset with_column(std::size_t col, std::vector<double> values, Mask missing) const;
  Dataset with_shape(Shape shape) const;
  Dataset select_rows(std::span<const std::size_t> rows) const;
  Dataset select_columns(std::span<const std::size_t> cols) const;
  Dataset drop_column(std::size_t col) const;
  Dataset append_column(ColumnSpec spec, std::vector<double> values, Mask missing) const;
  Dataset insert_columns(std::size_t position, std::vector<ColumnSpec> specs,
                         std::vector<std::vector<double>> values, std::vector<Mask> missing) const;
  /// Same cells with every mask cleared is invalid if NaNs remain; this
  /// variant replaces the value and mask of all columns at once.
  Dataset with_cells(std::vector<std::vector<double>> values, std::vector<Mask> missing) const;

  /// Cell-for-cell equality including masks; NaN sentinels compare equal.
  bool operator==(const Dataset& other) const;

 private:
  void validate() const;

  std::vector<ColumnSpec> columns_;
  std::vector<std::vector<double>> values_;
  std::vector<Mask> missing_;
  Shape shape_ = Shape::Long;
  std::size_t n_rows_ = 0;
};

double missing_sentinel();

}  // namespace longimp
