#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "longimp/dataset.hpp"
#include "longimp/diagnostics.hpp"
#include "longimp/fcs.hpp"
#include "longimp/imputed_stack.hpp"
#include "longimp/jm.hpp"
#include "longimp/tabular.hpp"

namespace longimp {

enum class MethodId {
  Jm1lWide,
  Fcs1lWide,
  Fcs1lWideMtw,
  Jm2l,
  Fcs2l,
  Jm1lDiWide,
  Fcs1lDiWide,
  Jm2lWide,
  Fcs2lWide,
  Jm2lDi,
  Fcs2lDi,
  Fcs3l,
};

struct MethodInfo {
  MethodId id;
  std::string name;  // e.g. "fcs-1l-wide"
  bool joint;        // JM sampler, else chained equations
  Shape shape;       // shape the imputation model works in
  bool school_level; // accounts for the higher-level clusters
};

const std::vector<MethodInfo>& method_catalog();
const MethodInfo& method_info(MethodId id);
/// Throws UnsupportedMethod, with an explanation for jm-3l.
MethodId method_from_name(const std::string& name);

/// Substantive model matching the method: random intercepts for the unit, or
/// for school and unit when the method accounts for schools.
std::string default_formula(MethodId id);

/// Column roles of a long dataset as the method builders see them: the
/// repeated (time-varying) and time-fixed variables split by completeness.
struct StudyLayout {
  std::string cluster;  // may be empty
  std::string unit;
  std::string time;
  ReshapeMap map;
  std::vector<std::string> repeated_incomplete, repeated_complete;
  std::vector<std::string> fixed_incomplete, fixed_complete;
};
StudyLayout study_layout(const Dataset& long_data);

struct ImputeOptions {
  int m = 5;
  int maxit = 10;
  std::optional<int> nburn;     // default 1000
  std::optional<int> nbetween;  // default 1000, 100 for jm-2l
  int mtw_window = 1;
  int workers = 1;
  std::uint64_t seed = 1;
};

/// Data in the method's working shape, with cluster indicators appended for
/// the DI methods (first cluster dropped).
struct PreparedData {
  Dataset data;
  StudyLayout layout;
  std::vector<std::string> indicators;
};
PreparedData prepare_data(MethodId id, const Dataset& long_data, std::vector<std::string>* warnings = nullptr);

JmSpec jm_spec_for(MethodId id, const PreparedData& prepared, const ImputeOptions& options);
FcsSpec fcs_spec_for(MethodId id, const PreparedData& prepared, const ImputeOptions& options);

struct MethodRun {
  /// Original and completed datasets, always long and in the input's row and
  /// column order.
  ImputedStack stack;
  std::optional<ChainTrace> trace;
  std::optional<ChainStats> stats;
  std::vector<std::string> warnings;
};

MethodRun run_method(MethodId id, const Dataset& long_data, const ImputeOptions& options);

}  // namespace longimp
