#include "longimp/dataset.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "longimp/error.hpp"

namespace longimp {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool same_cell(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

}  // namespace

double missing_sentinel() { return std::numeric_limits<double>::quiet_NaN(); }

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::Continuous: return "continuous";
    case Kind::Binary: return "binary";
    case Kind::Categorical: return "categorical";
  }
  return "continuous";
}

std::string to_string(Role role) {
  switch (role) {
    case Role::UnitId: return "unit-id";
    case Role::ClusterId: return "cluster-id";
    case Role::Time: return "time";
    case Role::Analysis: return "analysis";
    case Role::Auxiliary: return "auxiliary";
  }
  return "analysis";
}

std::string to_string(Shape shape) { return shape == Shape::Wide ? "wide" : "long"; }

Kind kind_from_string(const std::string& text) {
  if (text == "continuous") return Kind::Continuous;
  if (text == "binary") return Kind::Binary;
  if (text == "categorical") return Kind::Categorical;
  throw Error(ErrorKind::InvalidSchema, "unknown column kind '" + text + "'");
}

Role role_from_string(const std::string& text) {
  if (text == "unit-id") return Role::UnitId;
  if (text == "cluster-id") return Role::ClusterId;
  if (text == "time") return Role::Time;
  if (text == "analysis") return Role::Analysis;
  if (text == "auxiliary") return Role::Auxiliary;
  throw Error(ErrorKind::InvalidSchema, "unknown column role '" + text + "'");
}

Shape shape_from_string(const std::string& text) {
  if (text == "wide") return Shape::Wide;
  if (text == "long") return Shape::Long;
  throw Error(ErrorKind::InvalidSchema, "unknown shape '" + text + "'");
}

ColumnSpec ColumnSpec::continuous(std::string name, Role role) {
  return ColumnSpec{std::move(name), Kind::Continuous, {}, role};
}

ColumnSpec ColumnSpec::binary(std::string name, Role role, std::vector<std::string> levels) {
  return ColumnSpec{std::move(name), Kind::Binary, std::move(levels), role};
}

ColumnSpec ColumnSpec::categorical(std::string name, std::vector<std::string> levels, Role role) {
  return ColumnSpec{std::move(name), Kind::Categorical, std::move(levels), role};
}

Dataset::Dataset(std::vector<ColumnSpec> columns, std::vector<std::vector<double>> values,
                 std::vector<Mask> missing, Shape shape)
    : columns_(std::move(columns)),
      values_(std::move(values)),
      missing_(std::move(missing)),
      shape_(shape) {
  if (values_.size() != columns_.size()) {
    throw Error(ErrorKind::InvalidSchema, "value column count does not match column specs");
  }
  if (missing_.empty() && !columns_.empty()) {
    missing_.resize(columns_.size());
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      missing_[c].assign(values_[c].size(), 0);
      for (std::size_t r = 0; r < values_[c].size(); ++r) {
        if (std::isnan(values_[c][r])) missing_[c][r] = 1;
      }
    }
  }
  if (missing_.size() != columns_.size()) {
    throw Error(ErrorKind::InvalidSchema, "mask column count does not match column specs");
  }
  n_rows_ = values_.empty() ? 0 : values_.front().size();
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (values_[c].size() != n_rows_ || missing_[c].size() != n_rows_) {
      throw Error(ErrorKind::InvalidSchema, "ragged column '" + columns_[c].name + "'");
    }
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (missing_[c][r]) values_[c][r] = missing_sentinel();
    }
  }
  validate();
}

void Dataset::validate() const {
  std::set<std::string> names;
  std::size_t unit_ids = 0;
  std::size_t times = 0;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& spec = columns_[c];
    if (spec.name.empty()) throw Error(ErrorKind::InvalidSchema, "empty column name");
    if (!names.insert(spec.name).second) {
      throw Error(ErrorKind::InvalidSchema, "duplicate column '" + spec.name + "'");
    }
    if (spec.kind == Kind::Binary && spec.levels.size() != 2) {
      throw Error(ErrorKind::InvalidSchema, "binary column '" + spec.name + "' needs exactly 2 levels");
    }
    if (spec.kind == Kind::Categorical && spec.levels.size() < 2) {
      throw Error(ErrorKind::InvalidSchema,
                  "categorical column '" + spec.name + "' needs at least 2 levels");
    }
    if (spec.role == Role::UnitId) ++unit_ids;
    if (spec.role == Role::Time) ++times;
    if (spec.is_structural() && missing_count(c) > 0) {
      throw Error(ErrorKind::InvalidSchema, "structural column '" + spec.name + "' has missing cells");
    }
    if (spec.is_factor()) {
      const double k = static_cast<double>(spec.levels.size());
      for (std::size_t r = 0; r < n_rows_; ++r) {
        if (missing_[c][r]) continue;
        double v = values_[c][r];
        if (v < 0 || v >= k || v != std::floor(v)) {
          throw Error(ErrorKind::InvalidSchema,
                      "factor column '" + spec.name + "' holds a non-level value");
        }
      }
    }
  }
  if (columns_.empty()) return;
  if (unit_ids != 1) throw Error(ErrorKind::InvalidSchema, "dataset needs exactly one unit-id column");
  if (times > 1) throw Error(ErrorKind::InvalidSchema, "dataset has more than one time column");

  const std::size_t uid = unit_id_column();
  if (shape_ == Shape::Wide) {
    std::set<double> seen;
    for (double v : values_[uid]) {
      if (!seen.insert(v).second) {
        throw Error(ErrorKind::InvalidSchema, "wide dataset has a repeated unit id");
      }
    }
  } else if (auto t = time_column()) {
    std::set<std::pair<double, double>> seen;
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (!seen.insert({values_[uid][r], values_[*t][r]}).second) {
        throw Error(ErrorKind::DuplicateTimePoint, "repeated (unit, time) pair in long dataset");
      }
    }
  }
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

std::optional<std::size_t> Dataset::find(const std::string& name) const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].name == name) return c;
  }
  return std::nullopt;
}

std::size_t Dataset::index_of(const std::string& name) const {
  if (auto c = find(name)) return *c;
  throw Error(ErrorKind::UnknownColumn, "no column named '" + name + "'");
}

std::size_t Dataset::missing_count(std::size_t col) const {
  std::size_t n = 0;
  for (auto m : missing_.at(col)) n += m;
  return n;
}

std::size_t Dataset::unit_id_column() const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].role == Role::UnitId) return c;
  }
  throw Error(ErrorKind::InvalidSchema, "dataset has no unit-id column");
}

std::optional<std::size_t> Dataset::cluster_id_column() const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].role == Role::ClusterId) return c;
  }
  return std::nullopt;
}

std::optional<std::size_t> Dataset::time_column() const {
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].role == Role::Time) return c;
  }
  return std::nullopt;
}

std::string Dataset::format_cell(std::size_t row, std::size_t col) const {
  if (is_missing(row, col)) return "NA";
  const auto& spec = columns_[col];
  double v = values_[col][row];
  if (spec.is_factor()) return spec.levels.at(static_cast<std::size_t>(v));
  return format_double(v);
}

Dataset Dataset::with_column(std::size_t col, std::vector<double> values, Mask missing) const {
  if (missing.empty()) {
    missing.resize(values.size());
    for (std::size_t r = 0; r < values.size(); ++r) missing[r] = std::isnan(values[r]) ? 1 : 0;
  }
  auto v = values_;
  auto m = missing_;
  v.at(col) = std::move(values);
  m.at(col) = std::move(missing);
  return Dataset(columns_, std::move(v), std::move(m), shape_);
}

Dataset Dataset::with_shape(Shape shape) const { return Dataset(columns_, values_, missing_, shape); }

Dataset Dataset::with_cells(std::vector<std::vector<double>> values, std::vector<Mask> missing) const {
  return Dataset(columns_, std::move(values), std::move(missing), shape_);
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::vector<double>> v(columns_.size());
  std::vector<Mask> m(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    v[c].reserve(rows.size());
    m[c].reserve(rows.size());
    for (auto r : rows) {
      v[c].push_back(values_[c].at(r));
      m[c].push_back(missing_[c].at(r));
    }
  }
  return Dataset(columns_, std::move(v), std::move(m), shape_);
}

Dataset Dataset::select_columns(std::span<const std::size_t> cols) const {
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<double>> v;
  std::vector<Mask> m;
  for (auto c : cols) {
    specs.push_back(columns_.at(c));
    v.push_back(values_[c]);
    m.push_back(missing_[c]);
  }
  return Dataset(std::move(specs), std::move(v), std::move(m), shape_);
}

Dataset Dataset::drop_column(std::size_t col) const {
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (c != col) keep.push_back(c);
  }
  return select_columns(keep);
}

Dataset Dataset::append_column(ColumnSpec spec, std::vector<double> values, Mask missing) const {
  return insert_columns(columns_.size(), {std::move(spec)}, {std::move(values)}, {std::move(missing)});
}

Dataset Dataset::insert_columns(std::size_t position, std::vector<ColumnSpec> specs,
                                std::vector<std::vector<double>> values,
                                std::vector<Mask> missing) const {
  auto cs = columns_;
  auto v = values_;
  auto m = missing_;
  missing.resize(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!missing[k].empty()) continue;
    const auto& col = values[k];
    Mask mk(col.size(), 0);
    for (std::size_t r = 0; r < col.size(); ++r) mk[r] = std::isnan(col[r]) ? 1 : 0;
    missing[k] = std::move(mk);
  }
  cs.insert(cs.begin() + static_cast<std::ptrdiff_t>(position), specs.begin(), specs.end());
  v.insert(v.begin() + static_cast<std::ptrdiff_t>(position), values.begin(), values.end());
  m.insert(m.begin() + static_cast<std::ptrdiff_t>(position), missing.begin(), missing.end());
  return Dataset(std::move(cs), std::move(v), std::move(m), shape_);
}

bool Dataset::operator==(const Dataset& other) const {
  if (shape_ != other.shape_ || columns_ != other.columns_ || n_rows_ != other.n_rows_) return false;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (missing_[c] != other.missing_[c]) return false;
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (!same_cell(values_[c][r], other.values_[c][r])) return false;
    }
  }
  return true;
}

}  // namespace longimp
