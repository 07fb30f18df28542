#include "longimp/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "longimp/error.hpp"

namespace longimp {

namespace {

std::string integer_label(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace

void ReshapeMap::validate() const {
  std::set<std::string> fixed(time_fixed.begin(), time_fixed.end());
  for (const auto& s : stubs) {
    if (fixed.count(s)) {
      throw Error(ErrorKind::InvalidSchema, "stub '" + s + "' is also declared time-fixed");
    }
  }
  std::set<int> seen;
  for (int t : times) {
    if (!seen.insert(t).second) {
      throw Error(ErrorKind::InvalidSchema, "time list repeats " + std::to_string(t));
    }
  }
}

std::string ReshapeMap::wide_name(const std::string& stub, int time) {
  return stub + "." + std::to_string(time);
}

std::vector<std::vector<std::size_t>> group_rows(const Dataset& d, std::size_t col) {
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<double, std::size_t> slot;
  auto vals = d.values(col);
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    auto [it, inserted] = slot.try_emplace(vals[r], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(r);
  }
  return groups;
}

std::vector<int> group_index(const Dataset& d, std::size_t col, int* n_groups) {
  std::vector<int> out(d.n_rows());
  std::unordered_map<double, int> slot;
  auto vals = d.values(col);
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    auto [it, inserted] = slot.try_emplace(vals[r], static_cast<int>(slot.size()));
    out[r] = it->second;
  }
  if (n_groups) *n_groups = static_cast<int>(slot.size());
  return out;
}

static void register_baselines(ReshapeMap& map) {
  for (const auto& f : map.time_fixed) {
    for (const auto& s : map.stubs) {
      if (f.size() > s.size() + 1 && f.compare(0, s.size(), s) == 0 &&
          (f[s.size()] == 'w' || f[s.size()] == 'W')) {
        int wave = 0;
        if (parse_int(std::string_view(f).substr(s.size() + 1), wave)) map.baseline_waves[f] = wave;
      }
    }
  }
}

ReshapeMap infer_reshape_map(const Dataset& d) {
  if (d.shape() != Shape::Long) throw Error(ErrorKind::InvalidSchema, "reshape map needs long data");
  auto tcol = d.time_column();
  if (!tcol) throw Error(ErrorKind::InvalidSchema, "long dataset has no time column");
  ReshapeMap map;
  map.time_column = d.column(*tcol).name;
  std::set<int> times;
  for (double t : d.values(*tcol)) times.insert(static_cast<int>(std::lround(t)));
  map.times.assign(times.begin(), times.end());

  auto groups = group_rows(d, d.unit_id_column());
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (c == *tcol) continue;
    const auto& spec = d.column(c);
    bool varying = false;
    if (!spec.is_structural()) {
      for (const auto& g : groups) {
        double first = std::nan("");
        for (auto r : g) {
          if (d.is_missing(r, c)) continue;
          if (std::isnan(first)) {
            first = d.value(r, c);
          } else if (d.value(r, c) != first) {
            varying = true;
            break;
          }
        }
        if (varying) break;
      }
    }
    (varying ? map.stubs : map.time_fixed).push_back(spec.name);
  }
  register_baselines(map);
  return map;
}

ReshapeMap infer_wide_map(const Dataset& d) {
  ReshapeMap map;
  std::set<int> times;
  for (const auto& spec : d.columns()) {
    const auto dot = spec.name.rfind('.');
    int t = 0;
    if (dot != std::string::npos && dot > 0 &&
        parse_int(std::string_view(spec.name).substr(dot + 1), t)) {
      std::string stub = spec.name.substr(0, dot);
      if (std::find(map.stubs.begin(), map.stubs.end(), stub) == map.stubs.end()) {
        map.stubs.push_back(stub);
      }
      times.insert(t);
    } else {
      map.time_fixed.push_back(spec.name);
    }
  }
  map.times.assign(times.begin(), times.end());
  register_baselines(map);
  return map;
}

Dataset reshape_long_to_wide(const Dataset& d, const ReshapeMap& map,
                             std::vector<std::string>* warnings) {
  if (d.shape() != Shape::Long) throw Error(ErrorKind::InvalidSchema, "input is not long-shaped");
  map.validate();
  const std::size_t tcol = d.index_of(map.time_column);
  const std::size_t uid = d.unit_id_column();

  std::set<std::string> stubs(map.stubs.begin(), map.stubs.end());
  std::set<std::string> fixed(map.time_fixed.begin(), map.time_fixed.end());
  std::vector<std::size_t> fixed_cols;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (c == tcol) continue;
    const auto& name = d.column(c).name;
    if (fixed.count(name)) {
      fixed_cols.push_back(c);
    } else if (!stubs.count(name)) {
      throw Error(ErrorKind::UnknownStub, "column '" + name + "' is not covered by the reshape map");
    }
  }
  if (std::find(fixed_cols.begin(), fixed_cols.end(), uid) == fixed_cols.end()) {
    throw Error(ErrorKind::InvalidSchema, "unit-id column must be time-fixed");
  }
  std::vector<std::size_t> stub_cols;
  for (const auto& s : map.stubs) stub_cols.push_back(d.index_of(s));

  std::unordered_map<int, std::size_t> wave_slot;
  for (std::size_t k = 0; k < map.times.size(); ++k) wave_slot[map.times[k]] = k;

  auto groups = group_rows(d, uid);
  const std::size_t n_units = groups.size();
  const std::size_t n_out = fixed_cols.size() + map.times.size() * stub_cols.size();

  std::vector<ColumnSpec> specs;
  for (auto c : fixed_cols) specs.push_back(d.column(c));
  for (int t : map.times) {
    for (auto c : stub_cols) {
      auto spec = d.column(c);
      spec.name = ReshapeMap::wide_name(spec.name, t);
      specs.push_back(spec);
    }
  }
  std::vector<std::vector<double>> values(n_out, std::vector<double>(n_units, missing_sentinel()));
  std::vector<Mask> missing(n_out, Mask(n_units, 1));

  bool unbalanced = false;
  for (std::size_t u = 0; u < n_units; ++u) {
    const auto& rows = groups[u];
    for (std::size_t k = 0; k < fixed_cols.size(); ++k) {
      auto c = fixed_cols[k];
      for (auto r : rows) {
        if (!d.is_missing(r, c)) {
          values[k][u] = d.value(r, c);
          missing[k][u] = 0;
          break;
        }
      }
    }
    std::vector<bool> present(map.times.size(), false);
    for (auto r : rows) {
      int t = static_cast<int>(std::lround(d.value(r, tcol)));
      auto it = wave_slot.find(t);
      if (it == wave_slot.end()) {
        throw Error(ErrorKind::InvalidSchema, "time value " + std::to_string(t) + " not in reshape map");
      }
      const std::size_t w = it->second;
      if (present[w]) {
        throw Error(ErrorKind::DuplicateTimePoint,
                    "unit has two rows at time " + std::to_string(t));
      }
      present[w] = true;
      for (std::size_t s = 0; s < stub_cols.size(); ++s) {
        const std::size_t out = fixed_cols.size() + w * stub_cols.size() + s;
        if (!d.is_missing(r, stub_cols[s])) {
          values[out][u] = d.value(r, stub_cols[s]);
          missing[out][u] = 0;
        }
      }
    }
    if (std::find(present.begin(), present.end(), false) != present.end()) unbalanced = true;
  }
  if (unbalanced && warnings) {
    warnings->push_back("unbalanced long data: missing waves were materialized as missing cells");
  }
  return Dataset(std::move(specs), std::move(values), std::move(missing), Shape::Wide);
}

Dataset reshape_wide_to_long(const Dataset& d, const ReshapeMap& map) {
  if (d.shape() != Shape::Wide) throw Error(ErrorKind::InvalidSchema, "input is not wide-shaped");
  map.validate();
  for (const auto& s : map.stubs) {
    if (d.has_column(s)) {
      throw Error(ErrorKind::MalformedWideName, "stub column '" + s + "' lacks a time suffix");
    }
  }
  std::vector<std::vector<std::size_t>> stub_cols(map.stubs.size());
  std::set<std::size_t> used;
  for (std::size_t s = 0; s < map.stubs.size(); ++s) {
    for (int t : map.times) {
      auto name = ReshapeMap::wide_name(map.stubs[s], t);
      auto c = d.find(name);
      if (!c) throw Error(ErrorKind::MalformedWideName, "wide column '" + name + "' not found");
      stub_cols[s].push_back(*c);
      used.insert(*c);
    }
  }
  std::vector<std::size_t> fixed_cols;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (!used.count(c)) fixed_cols.push_back(c);
  }

  const std::size_t n = d.n_rows() * map.times.size();
  std::vector<ColumnSpec> specs;
  for (auto c : fixed_cols) specs.push_back(d.column(c));
  specs.push_back(ColumnSpec::continuous(map.time_column, Role::Time));
  for (std::size_t s = 0; s < map.stubs.size(); ++s) {
    auto spec = d.column(stub_cols[s].front());
    spec.name = map.stubs[s];
    specs.push_back(spec);
  }
  std::vector<std::vector<double>> values(specs.size(), std::vector<double>(n));
  std::vector<Mask> missing(specs.size(), Mask(n, 0));
  std::size_t out = 0;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (std::size_t w = 0; w < map.times.size(); ++w, ++out) {
      std::size_t k = 0;
      for (auto c : fixed_cols) {
        values[k][out] = d.value(r, c);
        missing[k][out] = d.is_missing(r, c);
        ++k;
      }
      values[k][out] = map.times[w];
      ++k;
      for (std::size_t s = 0; s < map.stubs.size(); ++s, ++k) {
        values[k][out] = d.value(r, stub_cols[s][w]);
        missing[k][out] = d.is_missing(r, stub_cols[s][w]);
      }
    }
  }
  return Dataset(std::move(specs), std::move(values), std::move(missing), Shape::Long);
}

Dataset dummy_expand(const Dataset& d, const std::string& col, bool drop_first) {
  const std::size_t c = d.index_of(col);
  if (d.missing_count(c) > 0) {
    throw Error(ErrorKind::MissingInFactor, "column '" + col + "' has missing cells");
  }
  const auto& spec = d.column(c);
  if (spec.role == Role::UnitId) {
    throw Error(ErrorKind::InvalidSchema, "cannot dummy-expand the unit-id column");
  }
  std::vector<std::string> labels;
  std::vector<double> codes;
  if (spec.is_factor()) {
    labels = spec.levels;
    for (std::size_t k = 0; k < labels.size(); ++k) codes.push_back(static_cast<double>(k));
  } else {
    std::set<double> distinct(d.values(c).begin(), d.values(c).end());
    for (double v : distinct) {
      if (v != std::floor(v)) {
        throw Error(ErrorKind::InvalidSchema, "column '" + col + "' is not integer-coded");
      }
      codes.push_back(v);
      labels.push_back(integer_label(v));
    }
  }
  const Role role = spec.role == Role::ClusterId ? Role::Auxiliary : spec.role;
  std::vector<ColumnSpec> specs;
  std::vector<std::vector<double>> values;
  for (std::size_t k = drop_first ? 1 : 0; k < codes.size(); ++k) {
    specs.push_back(ColumnSpec::binary(col + "_" + labels[k], role));
    std::vector<double> ind(d.n_rows());
    for (std::size_t r = 0; r < d.n_rows(); ++r) ind[r] = d.value(r, c) == codes[k] ? 1.0 : 0.0;
    values.push_back(std::move(ind));
  }
  return d.drop_column(c).insert_columns(c, std::move(specs), std::move(values), {});
}

Dataset cluster_aggregate(const Dataset& d, const std::string& group,
                          const std::vector<std::string>& vars) {
  const std::size_t g = d.index_of(group);
  std::vector<std::size_t> cols;
  for (const auto& v : vars) cols.push_back(d.index_of(v));
  auto groups = group_rows(d, g);

  std::vector<ColumnSpec> specs{ColumnSpec::continuous(group, Role::UnitId)};
  std::vector<std::vector<double>> values(1 + cols.size(), std::vector<double>(groups.size()));
  std::vector<Mask> missing(1 + cols.size(), Mask(groups.size(), 0));
  for (auto c : cols) specs.push_back(ColumnSpec::continuous(d.column(c).name, d.column(c).role));
  for (std::size_t k = 0; k < groups.size(); ++k) {
    values[0][k] = d.value(groups[k].front(), g);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      double sum = 0.0;
      std::size_t n = 0;
      for (auto r : groups[k]) {
        if (d.is_missing(r, cols[j])) continue;
        sum += d.value(r, cols[j]);
        ++n;
      }
      if (n == 0) {
        values[j + 1][k] = missing_sentinel();
        missing[j + 1][k] = 1;
      } else {
        values[j + 1][k] = sum / static_cast<double>(n);
      }
    }
  }
  return Dataset(std::move(specs), std::move(values), std::move(missing), Shape::Wide);
}

Dataset available_case_filter(const Dataset& d, const std::vector<std::string>& model_vars) {
  std::vector<std::size_t> cols;
  for (const auto& v : model_vars) cols.push_back(d.index_of(v));
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    bool complete = std::none_of(cols.begin(), cols.end(), [&](auto c) { return d.is_missing(r, c); });
    if (complete) keep.push_back(r);
  }
  return d.select_rows(keep);
}

}  // namespace longimp
