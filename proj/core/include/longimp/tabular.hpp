#pragma once

#include <map>
#include <string>
#include <vector>

#include "longimp/dataset.hpp"

namespace longimp {

/// Describes how a long dataset maps to wide columns named `stub.time`.
struct ReshapeMap {
  std::vector<std::string> stubs;       // time-varying variables, in output order
  std::vector<int> times;               // e.g. {3, 5, 7}
  std::vector<std::string> time_fixed;  // copied once per unit
  std::string time_column = "time";
  /// Time-fixed columns that are a baseline measurement of a stub, with the
  /// wave they belong to (numeracy_scorew1 -> wave 1). Only used to place
  /// such columns on the wave axis for moving-window predictor matrices.
  std::map<std::string, int> baseline_waves;

  void validate() const;
  static std::string wide_name(const std::string& stub, int time);
};

/// Infers a reshape map from a long dataset: a non-structural column is a
/// stub when it is not constant within some unit. Columns named `<stub>w<k>`
/// are registered as baseline waves of `<stub>`.
ReshapeMap infer_reshape_map(const Dataset& long_data);

/// Infers a map from wide column names of the form `stub.t`; all other
/// columns are time-fixed.
ReshapeMap infer_wide_map(const Dataset& wide_data);

/// Unbalanced input (a unit lacking a whole wave) materializes that wave as
/// missing cells; a warning is appended when `warnings` is given.
Dataset reshape_long_to_wide(const Dataset& d, const ReshapeMap& map,
                             std::vector<std::string>* warnings = nullptr);
Dataset reshape_wide_to_long(const Dataset& d, const ReshapeMap& map);

/// Replaces `col` by indicator columns named `col_<level>`. Cluster-id and
/// continuous integer columns use their sorted distinct values as levels.
Dataset dummy_expand(const Dataset& d, const std::string& col, bool drop_first);

/// One row per group; each var is the mean of the group's non-missing cells.
Dataset cluster_aggregate(const Dataset& d, const std::string& group,
                          const std::vector<std::string>& vars);

/// Keeps the rows fully observed on `model_vars`.
Dataset available_case_filter(const Dataset& d, const std::vector<std::string>& model_vars);

/// Row indices grouped by the value of `col`, groups in first-seen order.
std::vector<std::vector<std::size_t>> group_rows(const Dataset& d, std::size_t col);

/// Per-row zero-based group index for `col` (first-seen order).
std::vector<int> group_index(const Dataset& d, std::size_t col, int* n_groups = nullptr);

}  // namespace longimp
