#include "longimp/methods.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "longimp/error.hpp"
#include "longimp/rng.hpp"

namespace longimp {

const std::vector<MethodInfo>& method_catalog() {
  static const std::vector<MethodInfo> catalog{
      {MethodId::Jm1lWide, "jm-1l-wide", true, Shape::Wide, false},
      {MethodId::Fcs1lWide, "fcs-1l-wide", false, Shape::Wide, false},
      {MethodId::Fcs1lWideMtw, "fcs-1l-wide-mtw", false, Shape::Wide, false},
      {MethodId::Jm2l, "jm-2l", true, Shape::Long, false},
      {MethodId::Fcs2l, "fcs-2l", false, Shape::Long, false},
      {MethodId::Jm1lDiWide, "jm-1l-di-wide", true, Shape::Wide, true},
      {MethodId::Fcs1lDiWide, "fcs-1l-di-wide", false, Shape::Wide, true},
      {MethodId::Jm2lWide, "jm-2l-wide", true, Shape::Wide, true},
      {MethodId::Fcs2lWide, "fcs-2l-wide", false, Shape::Wide, true},
      {MethodId::Jm2lDi, "jm-2l-di", true, Shape::Long, true},
      {MethodId::Fcs2lDi, "fcs-2l-di", false, Shape::Long, true},
      {MethodId::Fcs3l, "fcs-3l", false, Shape::Long, true},
  };
  return catalog;
}

const MethodInfo& method_info(MethodId id) {
  for (const auto& m : method_catalog()) {
    if (m.id == id) return m;
  }
  throw Error(ErrorKind::UnsupportedMethod, "unknown method id");
}

MethodId method_from_name(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& m : method_catalog()) {
    if (m.name == lower) return m.id;
  }
  if (lower == "jm-3l") {
    throw Error(ErrorKind::UnsupportedMethod,
                "jm-3l (a joint model with random effects for both units and clusters) is not available; "
                "use jm-2l-wide, jm-2l-di or fcs-3l");
  }
  std::string known;
  for (const auto& m : method_catalog()) known += (known.empty() ? "" : ", ") + m.name;
  throw Error(ErrorKind::UnsupportedMethod, "unknown method '" + name + "' (known: " + known + ")");
}

std::string default_formula(MethodId id) {
  const std::string fixed = "numeracy_score ~ prev_dep + time + age + numeracy_scorew1 + sex + factor(ses)";
  return fixed + (method_info(id).school_level ? " + (1 | school/id)" : " + (1 | id)");
}

StudyLayout study_layout(const Dataset& long_data) {
  if (long_data.shape() != Shape::Long) throw Error(ErrorKind::InvalidSchema, "methods take long-shaped input");
  StudyLayout s;
  s.unit = long_data.column(long_data.unit_id_column()).name;
  if (auto c = long_data.cluster_id_column()) s.cluster = long_data.column(*c).name;
  auto t = long_data.time_column();
  if (!t) throw Error(ErrorKind::InvalidSchema, "long input needs a time column");
  s.time = long_data.column(*t).name;
  s.map = infer_reshape_map(long_data);
  for (const auto& name : s.map.stubs) {
    (long_data.column_complete(long_data.index_of(name)) ? s.repeated_complete : s.repeated_incomplete).push_back(name);
  }
  for (const auto& name : s.map.time_fixed) {
    const std::size_t c = long_data.index_of(name);
    if (long_data.column(c).is_structural()) continue;
    (long_data.column_complete(c) ? s.fixed_complete : s.fixed_incomplete).push_back(name);
  }
  return s;
}

namespace {

bool uses_indicators(MethodId id) {
  return id == MethodId::Jm1lDiWide || id == MethodId::Fcs1lDiWide || id == MethodId::Jm2lDi ||
         id == MethodId::Fcs2lDi;
}

std::vector<std::string> wide_names(const StudyLayout& s, const std::vector<std::string>& stubs) {
  std::vector<std::string> out;
  for (const auto& stub : stubs) {
    for (int t : s.map.times) out.push_back(ReshapeMap::wide_name(stub, t));
  }
  return out;
}

// Incomplete columns of `d` among `names`, in dataset order.
std::vector<std::string> in_dataset_order(const Dataset& d, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (std::find(names.begin(), names.end(), d.column(c).name) != names.end()) out.push_back(d.column(c).name);
  }
  return out;
}

std::vector<std::string> append(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void require_cluster(const StudyLayout& s, MethodId id) {
  if (s.cluster.empty()) {
    throw Error(ErrorKind::InvalidSpec, "method " + method_info(id).name + " needs a cluster column");
  }
}

// Brings a completed dataset to the reference's column and row order.
Dataset conform(const Dataset& d, const Dataset& ref, const StudyLayout& s) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < ref.n_cols(); ++c) cols.push_back(d.index_of(ref.column(c).name));
  Dataset out = d.select_columns(cols);
  const std::size_t uid = ref.index_of(s.unit), tid = ref.index_of(s.time);
  std::map<std::pair<double, double>, std::size_t> pos;
  for (std::size_t r = 0; r < out.n_rows(); ++r) pos[{out.value(r, uid), out.value(r, tid)}] = r;
  std::vector<std::size_t> rows;
  rows.reserve(ref.n_rows());
  for (std::size_t r = 0; r < ref.n_rows(); ++r) {
    auto it = pos.find({ref.value(r, uid), ref.value(r, tid)});
    if (it == pos.end()) throw Error(ErrorKind::InvalidSchema, "imputed data lost a unit-wave row");
    rows.push_back(it->second);
  }
  return out.select_rows(rows).with_shape(Shape::Long);
}

}  // namespace

PreparedData prepare_data(MethodId id, const Dataset& long_data, std::vector<std::string>* warnings) {
  PreparedData p;
  p.layout = study_layout(long_data);
  const auto& info = method_info(id);
  p.data = info.shape == Shape::Wide ? reshape_long_to_wide(long_data, p.layout.map, warnings) : long_data;
  if (uses_indicators(id)) {
    require_cluster(p.layout, id);
    Dataset expanded = dummy_expand(p.data, p.layout.cluster, true);
    for (std::size_t c = 0; c < expanded.n_cols(); ++c) {
      const auto& spec = expanded.column(c);
      if (p.data.has_column(spec.name)) continue;
      auto v = expanded.values(c);
      p.data = p.data.append_column(spec, std::vector<double>(v.begin(), v.end()), {});
      p.indicators.push_back(spec.name);
    }
  }
  return p;
}

JmSpec jm_spec_for(MethodId id, const PreparedData& p, const ImputeOptions& options) {
  const auto& info = method_info(id);
  if (!info.joint) throw Error(ErrorKind::InvalidSpec, info.name + " is not a joint-model method");
  const StudyLayout& s = p.layout;
  JmSpec spec;
  spec.nimp = options.m;
  spec.nburn = options.nburn.value_or(1000);
  spec.nbetween = options.nbetween.value_or(id == MethodId::Jm2l ? 100 : 1000);
  if (info.shape == Shape::Wide) {
    spec.y = in_dataset_order(p.data, append(s.fixed_incomplete, wide_names(s, s.repeated_incomplete)));
    spec.x = in_dataset_order(p.data, append(s.fixed_complete, wide_names(s, s.repeated_complete)));
    spec.x = append(spec.x, p.indicators);
    if (id == MethodId::Jm2lWide) {
      require_cluster(s, id);
      spec.cluster = s.cluster;
      spec.cov_mode = CovMode::ClusterSpecific;
    }
    return spec;
  }
  spec.y = s.repeated_incomplete;
  spec.y2 = s.fixed_incomplete;
  spec.x = append(append(s.fixed_complete, s.repeated_complete), {s.time});
  spec.x2 = s.fixed_complete;
  spec.z = {s.time};
  spec.cluster = s.unit;
  if (id == MethodId::Jm2lDi) {
    spec.x = append(spec.x, p.indicators);
    spec.x2 = append(spec.x2, p.indicators);
    spec.cov_mode = CovMode::ClusterSpecific;
  }
  return spec;
}

FcsSpec fcs_spec_for(MethodId id, const PreparedData& p, const ImputeOptions& options) {
  const auto& info = method_info(id);
  if (info.joint) throw Error(ErrorKind::InvalidSpec, info.name + " is not a chained-equations method");
  const StudyLayout& s = p.layout;
  const Dataset& d = p.data;
  FcsSpec spec;
  spec.m = options.m;
  spec.maxit = options.maxit;
  spec.pred = id == MethodId::Fcs1lWideMtw ? mtw_predictor_matrix(d, s.map, options.mtw_window)
                                           : default_predictor_matrix(d);
  auto zero = [&](const std::string& col) {
    if (!col.empty() && d.has_column(col)) spec.pred.set_column(col, 0);
  };
  auto kind = [&](const std::string& col) { return d.column(d.index_of(col)).kind; };

  if (info.shape == Shape::Wide) {
    const auto incomplete = in_dataset_order(d, append(s.fixed_incomplete, wide_names(s, s.repeated_incomplete)));
    zero(s.unit);
    if (id == MethodId::Fcs2lWide) {
      require_cluster(s, id);
      spec.pred.set_column(s.cluster, -2);
    } else {
      zero(s.cluster);
    }
    for (const auto& name : incomplete) {
      const Kind k = kind(name);
      if (id == MethodId::Fcs2lWide) {
        spec.methods[name] = k == Kind::Continuous ? UniMethod::Pan2l
                             : k == Kind::Binary   ? UniMethod::Latent2l
                                                   : UniMethod::Pmm2l;
      } else {
        spec.methods[name] = k == Kind::Continuous ? UniMethod::Norm
                             : k == Kind::Binary   ? UniMethod::Logreg
                                                   : UniMethod::Polr;
      }
    }
    return spec;
  }

  if (id == MethodId::Fcs3l) {
    require_cluster(s, id);
    zero(s.unit);
    zero(s.cluster);
    for (const auto& name : s.repeated_incomplete) {
      spec.methods[name] = kind(name) == Kind::Continuous ? UniMethod::MlLmerContinuous : UniMethod::MlLmerPmm;
      spec.levels[name] = {"", {s.unit, s.cluster}};
    }
    for (const auto& name : s.fixed_incomplete) {
      spec.methods[name] = kind(name) == Kind::Continuous ? UniMethod::MlLmerContinuous : UniMethod::MlLmerPmm;
      spec.levels[name] = {s.unit, {s.cluster}};
      spec.pred.set(name, s.time, 0);
    }
    return spec;
  }

  // fcs-2l and fcs-2l-di
  zero(s.cluster);
  spec.pred.set_column(s.unit, -2);
  const auto repeated = append(s.repeated_incomplete, s.repeated_complete);
  for (const auto& name : s.fixed_incomplete) {
    spec.methods[name] = kind(name) == Kind::Continuous ? UniMethod::Only2lNorm : UniMethod::Only2lPmm;
    spec.pred.set(name, s.time, 0);
  }
  for (const auto& name : s.repeated_incomplete) {
    const Kind k = kind(name);
    spec.methods[name] = k == Kind::Continuous ? UniMethod::Pan2l
                         : k == Kind::Binary   ? UniMethod::Latent2l
                                               : UniMethod::Pmm2l;
    spec.pred.set(name, s.time, 2);
    for (const auto& other : repeated) {
      if (other != name) spec.pred.set(name, other, 3);
    }
  }
  return spec;
}

MethodRun run_method(MethodId id, const Dataset& long_data, const ImputeOptions& options) {
  MethodRun run;
  const auto& info = method_info(id);
  if (id == MethodId::Fcs2lDi) {
    run.warnings.push_back(
        "fcs-2l-di often fails to converge: cluster indicators inside two-level imputation models are "
        "sparse; prefer fcs-3l or jm-2l-wide");
  }
  PreparedData p = prepare_data(id, long_data, &run.warnings);
  RngStream rng(options.seed, 0);
  ImputedStack working;
  if (info.joint) {
    JmSpec spec = jm_spec_for(id, p, options);
    JmResult r = run_jm(rng, spec, p.data);
    working = std::move(r.stack);
    run.trace = std::move(r.trace);
    run.warnings.insert(run.warnings.end(), r.warnings.begin(), r.warnings.end());
  } else {
    FcsSpec spec = fcs_spec_for(id, p, options);
    FcsResult r = run_fcs(rng, p.data, spec, options.workers);
    working = std::move(r.stack);
    run.stats = std::move(r.stats);
    run.warnings.insert(run.warnings.end(), r.warnings.begin(), r.warnings.end());
  }
  run.stack.original = long_data;
  for (auto& imp : working.imputations) {
    Dataset d = imp;
    for (const auto& name : p.indicators) d = d.drop_column(d.index_of(name));
    if (info.shape == Shape::Wide) d = reshape_wide_to_long(d, p.layout.map);
    run.stack.imputations.push_back(conform(d, long_data, p.layout));
  }
  return run;
}

}  // namespace longimp
