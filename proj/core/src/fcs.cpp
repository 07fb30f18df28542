#include "longimp/fcs.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "longimp/error.hpp"
#include "longimp/io.hpp"

namespace longimp {

PredictorMatrix default_predictor_matrix(const Dataset& d) {
  PredictorMatrix p(d.column_names());
  for (std::size_t c = 0; c < d.n_cols(); ++c) p.set_column(d.column(c).name, 1);
  return p;
}

PredictorMatrix mtw_predictor_matrix(const Dataset& d, const ReshapeMap& map, int window) {
  PredictorMatrix p = default_predictor_matrix(d);
  std::set<int> wave_set(map.times.begin(), map.times.end());
  for (const auto& [name, wave] : map.baseline_waves) wave_set.insert(wave);
  const std::vector<int> waves(wave_set.begin(), wave_set.end());
  auto position = [&](int wave) {
    return static_cast<int>(std::lower_bound(waves.begin(), waves.end(), wave) - waves.begin());
  };
  std::vector<int> pos(d.n_cols(), -1);
  for (const auto& stub : map.stubs) {
    for (int t : map.times) {
      const std::string name = ReshapeMap::wide_name(stub, t);
      auto c = d.find(name);
      if (!c) throw Error(ErrorKind::MalformedWideName, "wide column '" + name + "' not found");
      pos[*c] = position(t);
    }
  }
  for (const auto& [name, wave] : map.baseline_waves) {
    if (auto c = d.find(name)) pos[*c] = position(wave);
  }
  for (std::size_t r = 0; r < d.n_cols(); ++r) {
    if (pos[r] < 0) continue;
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
      if (c != r && pos[c] >= 0 && std::abs(pos[c] - pos[r]) > window) {
        p.set(d.column(r).name, d.column(c).name, 0);
      }
    }
  }
  return p;
}

MethodVector default_method_vector(const Dataset& d) {
  MethodVector mv;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    const auto& spec = d.column(c);
    if (spec.is_structural() || d.column_complete(c)) continue;
    switch (spec.kind) {
      case Kind::Continuous:
        mv[spec.name] = UniMethod::Norm;
        break;
      case Kind::Binary:
        mv[spec.name] = UniMethod::Logreg;
        break;
      case Kind::Categorical:
        mv[spec.name] = UniMethod::Polr;
        break;
    }
  }
  return mv;
}

void write_chain_stats_csv(std::ostream& out, const ChainStats& stats) {
  out << "chain,iteration,column,mean,sd\n";
  for (const auto& s : stats) {
    out << s.chain << ',' << s.iteration << ",\"" << s.column << "\"," << format_number(s.mean) << ','
        << format_number(s.sd) << '\n';
  }
}

void write_chain_stats_csv(const std::filesystem::path& path, const ChainStats& stats) {
  std::ostringstream os;
  write_chain_stats_csv(os, stats);
  write_file_atomic(path, os.str());
}

ChainStats read_chain_stats_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseCsv, "empty chain-stats file");
  ChainStats out;
  std::size_t lineno = 1;
  auto number = [&](const std::string& f) {
    if (f == "NA") return std::nan("");
    try {
      return std::stod(f);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseCsv, "line " + std::to_string(lineno) + ": bad number '" + f + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw Error(ErrorKind::ParseCsv, "line " + std::to_string(lineno) + ": expected 5 fields");
    out.push_back({static_cast<int>(number(f[0])), static_cast<int>(number(f[1])), f[2], number(f[3]), number(f[4])});
  }
  return out;
}

ChainStats read_chain_stats_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_chain_stats_csv(in);
}

void FcsSpec::validate(const Dataset& d) const {
  if (maxit < 1) throw Error(ErrorKind::InvalidSpec, "maxit must be >= 1");
  if (m < 1) throw Error(ErrorKind::InvalidSpec, "m must be >= 1");
  if (pred.size() != d.n_cols()) {
    throw Error(ErrorKind::InvalidSpec, "predictor matrix must cover every column");
  }
  for (std::size_t c = 0; c < d.n_cols(); ++c) pred.index_of(d.column(c).name);
  pred.validate();
  for (const auto& [name, method] : methods) {
    d.index_of(name);
    const std::size_t row = pred.index_of(name);
    if (is_multilevel(method)) continue;
    for (std::size_t c = 0; c < pred.size(); ++c) {
      const int code = pred(row, c);
      if (code == 2 || code == 3) {
        throw Error(ErrorKind::InvalidSpec, "codes 2 and 3 need a multilevel method ('" + name + "')");
      }
    }
  }
  for (const auto& [name, lv] : levels) {
    d.index_of(name);
    if (!lv.level.empty()) d.index_of(lv.level);
    for (const auto& c : lv.clusters) d.index_of(c);
  }
  for (const auto& name : visit_order) d.index_of(name);
}

nlohmann::json to_json(const FcsSpec& spec) {
  nlohmann::json j;
  j["methods"] = nlohmann::json::object();
  for (const auto& [name, method] : spec.methods) j["methods"][name] = to_string(method);
  j["predictor_matrix"] = nlohmann::json::object();
  for (std::size_t r = 0; r < spec.pred.size(); ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t c = 0; c < spec.pred.size(); ++c) {
      if (spec.pred(r, c) != 0) row[spec.pred.names()[c]] = spec.pred(r, c);
    }
    j["predictor_matrix"][spec.pred.names()[r]] = row;
  }
  j["levels"] = nlohmann::json::object();
  for (const auto& [name, lv] : spec.levels) j["levels"][name] = {{"level", lv.level}, {"clusters", lv.clusters}};
  j["maxit"] = spec.maxit;
  j["m"] = spec.m;
  if (!spec.visit_order.empty()) j["visit_order"] = spec.visit_order;
  return j;
}

FcsSpec fcs_spec_from_json(const nlohmann::json& j, const Dataset& d) {
  FcsSpec spec;
  spec.pred = PredictorMatrix(d.column_names());
  try {
    if (j.contains("methods")) {
      for (const auto& [name, method] : j.at("methods").items()) {
        spec.methods[name] = uni_method_from_string(method.get<std::string>());
      }
    }
    if (j.contains("predictor_matrix")) {
      for (const auto& [row, cols] : j.at("predictor_matrix").items()) {
        for (const auto& [col, code] : cols.items()) spec.pred.set(row, col, code.get<int>());
      }
    } else {
      spec.pred = default_predictor_matrix(d);
    }
    if (j.contains("levels")) {
      for (const auto& [name, lv] : j.at("levels").items()) {
        VariableLevel v;
        v.level = lv.value("level", std::string());
        v.clusters = lv.value("clusters", std::vector<std::string>());
        spec.levels[name] = v;
      }
    }
    spec.maxit = j.value("maxit", spec.maxit);
    spec.m = j.value("m", spec.m);
    spec.visit_order = j.value("visit_order", std::vector<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("FCS spec: ") + e.what());
  }
  spec.validate(d);
  return spec;
}

namespace {

// Grouping column for cluster-level methods, if any.
std::optional<std::size_t> cluster_level_column(const Dataset& d, const FcsSpec& spec, const std::string& name,
                                                UniMethod method) {
  if (method == UniMethod::Only2lNorm || method == UniMethod::Only2lPmm) {
    const std::size_t row = spec.pred.index_of(name);
    for (std::size_t c = 0; c < spec.pred.size(); ++c) {
      if (spec.pred(row, c) == -2) return d.index_of(spec.pred.names()[c]);
    }
    return std::nullopt;
  }
  if (method == UniMethod::MlLmerContinuous || method == UniMethod::MlLmerPmm) {
    auto it = spec.levels.find(name);
    if (it != spec.levels.end() && !it->second.level.empty()) return d.index_of(it->second.level);
  }
  return std::nullopt;
}

void initialize(RngStream& rng, WorkingData& w, std::size_t c, std::optional<std::size_t> cluster) {
  const Dataset& d = w.original();
  auto miss = w.missing(c);
  auto& v = w.column(c);
  std::vector<double> observed;
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!miss[r]) observed.push_back(v[r]);
  }
  if (observed.empty()) throw Error(ErrorKind::InvalidSpec, "column '" + d.column(c).name + "' has no observed values");
  if (!cluster) {
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (miss[r]) v[r] = observed[rng.index(observed.size())];
    }
    return;
  }
  int n_groups = 0;
  auto g = group_index(d, *cluster, &n_groups);
  std::vector<double> value(static_cast<std::size_t>(n_groups), std::nan(""));
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!miss[r]) value[static_cast<std::size_t>(g[r])] = v[r];
  }
  for (auto& x : value) {
    if (std::isnan(x)) x = observed[rng.index(observed.size())];
  }
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (miss[r]) v[r] = value[static_cast<std::size_t>(g[r])];
  }
}

}  // namespace

Dataset run_fcs_chain(RngStream& rng, const Dataset& d, const FcsSpec& spec, int chain, ChainStats* stats,
                      std::vector<std::string>* warnings) {
  WorkingData w(d);
  std::vector<std::pair<std::size_t, UniMethod>> order;
  auto add = [&](const std::string& name) {
    auto it = spec.methods.find(name);
    if (it == spec.methods.end() || it->second == UniMethod::None) return;
    const std::size_t c = d.index_of(name);
    if (d.column_complete(c)) return;
    order.emplace_back(c, it->second);
  };
  if (spec.visit_order.empty()) {
    for (std::size_t c = 0; c < d.n_cols(); ++c) add(d.column(c).name);
  } else {
    for (const auto& name : spec.visit_order) add(name);
  }
  for (const auto& [c, method] : order) {
    initialize(rng, w, c, cluster_level_column(d, spec, d.column(c).name, method));
  }
  SamplerCache cache;
  for (int it = 1; it <= spec.maxit; ++it) {
    for (const auto& [c, method] : order) {
      try {
        impute_univariate(rng, method, c, spec.pred, spec.levels, w, cache, spec.options, warnings);
      } catch (const Error& e) {
        throw Error(e.kind(), "chain " + std::to_string(chain) + ", column '" + d.column(c).name +
                                  "', iteration " + std::to_string(it) + ": " + e.what());
      }
    }
    if (!stats) continue;
    for (const auto& [c, method] : order) {
      auto miss = w.missing(c);
      const auto& v = w.column(c);
      double sum = 0, sq = 0, n = 0;
      for (std::size_t r = 0; r < v.size(); ++r) {
        if (!miss[r]) continue;
        sum += v[r];
        ++n;
      }
      const double mean = sum / n;
      for (std::size_t r = 0; r < v.size(); ++r) {
        if (miss[r]) sq += (v[r] - mean) * (v[r] - mean);
      }
      stats->push_back({chain, it, d.column(c).name, mean, n > 1 ? std::sqrt(sq / (n - 1)) : std::nan("")});
    }
  }
  return w.completed();
}

FcsResult run_fcs(const RngStream& base, const Dataset& d, const FcsSpec& spec, int workers) {
  spec.validate(d);
  const auto m = static_cast<std::size_t>(spec.m);
  std::vector<Dataset> out(m);
  std::vector<ChainStats> stats(m);
  std::vector<std::vector<std::string>> warns(m);
  std::vector<std::exception_ptr> errors(m);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t c = next++; c < m; c = next++) {
      try {
        RngStream rng = base.split(c);
        out[c] = run_fcs_chain(rng, d, spec, static_cast<int>(c) + 1, &stats[c], &warns[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp(workers, 1, static_cast<int>(m)));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  FcsResult result;
  result.stack.original = d;
  result.stack.imputations = std::move(out);
  std::set<std::string> seen;
  for (std::size_t c = 0; c < m; ++c) {
    result.stats.insert(result.stats.end(), stats[c].begin(), stats[c].end());
    for (auto& msg : warns[c]) {
      if (seen.insert(msg).second) result.warnings.push_back(msg);
    }
  }
  return result;
}

}  // namespace longimp
