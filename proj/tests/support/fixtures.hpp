#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "longimp/dataset.hpp"

namespace longimp::testing {

inline constexpr double NA = std::numeric_limits<double>::quiet_NaN();

/// Builds a dataset from columns whose NaN cells become missing. Without a
/// unit-id column a trailing "row_id" (1..n) is appended.
inline Dataset make_dataset(std::vector<ColumnSpec> cols, std::vector<std::vector<double>> values,
                            Shape shape = Shape::Long) {
  const bool has_unit = std::any_of(cols.begin(), cols.end(), [](const ColumnSpec& c) { return c.role == Role::UnitId; });
  if (!has_unit && !values.empty()) {
    cols.push_back(ColumnSpec::continuous("row_id", Role::UnitId));
    std::vector<double> ids(values.front().size());
    for (std::size_t r = 0; r < ids.size(); ++r) ids[r] = static_cast<double>(r + 1);
    values.push_back(std::move(ids));
  }
  std::vector<Mask> masks;
  for (const auto& v : values) {
    Mask m(v.size());
    for (std::size_t r = 0; r < v.size(); ++r) m[r] = std::isnan(v[r]) ? 1 : 0;
    masks.push_back(std::move(m));
  }
  return Dataset(std::move(cols), std::move(values), std::move(masks), shape);
}

/// Balanced long panel: cluster, id, a fixed covariate `f`, a fixed binary
/// `g`, time, and repeated `y` (continuous) and `b` (binary), with random
/// missing cells in the analysis columns.
inline Dataset random_panel(std::mt19937_64& gen, int n_units, const std::vector<int>& times,
                            double p_missing) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> z(0, 1);
  std::vector<std::vector<double>> v(7);
  for (int i = 0; i < n_units; ++i) {
    const double cl = 1 + i % 4, f = z(gen), g = u(gen) < 0.5 ? 0 : 1;
    const bool f_na = u(gen) < p_missing, g_na = u(gen) < p_missing;
    for (int t : times) {
      v[0].push_back(cl);
      v[1].push_back(i + 1);
      v[2].push_back(f_na ? NA : f);
      v[3].push_back(g_na ? NA : g);
      v[4].push_back(t);
      v[5].push_back(u(gen) < p_missing ? NA : z(gen));
      v[6].push_back(u(gen) < p_missing ? NA : (u(gen) < 0.5 ? 0 : 1));
    }
  }
  return make_dataset({ColumnSpec::continuous("school", Role::ClusterId), ColumnSpec::continuous("id", Role::UnitId),
                       ColumnSpec::continuous("f"), ColumnSpec::binary("g"),
                       ColumnSpec::continuous("time", Role::Time), ColumnSpec::continuous("y"),
                       ColumnSpec::binary("b")},
                      std::move(v));
}

}  // namespace longimp::testing
