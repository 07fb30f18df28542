#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "longimp/dataset.hpp"
#include "longimp/imputed_stack.hpp"
#include "longimp/rng.hpp"
#include "longimp/tabular.hpp"
#include "longimp/univariate.hpp"

namespace longimp {

/// All ones off the diagonal.
PredictorMatrix default_predictor_matrix(const Dataset& d);

/// Default matrix with repeated measures restricted to a moving window: for a
/// row at wave t, columns at waves more than `window` positions away on the
/// wave list are zeroed. Baseline columns (map.baseline_waves) sit on the
/// same list. Time-fixed columns are untouched. Throws MalformedWideName when
/// a `stub.t` column of the map is absent from `d`.
PredictorMatrix mtw_predictor_matrix(const Dataset& d, const ReshapeMap& map, int window);

/// norm for continuous, logreg for binary, polr for categorical; none for
/// complete and structural columns.
MethodVector default_method_vector(const Dataset& d);

/// Mean and sd of the imputed cells of one column after one iteration.
struct ChainStat {
  int chain = 0;
  int iteration = 0;
  std::string column;
  double mean = 0;
  double sd = 0;
};
using ChainStats = std::vector<ChainStat>;

void write_chain_stats_csv(std::ostream& out, const ChainStats& stats);
void write_chain_stats_csv(const std::filesystem::path& path, const ChainStats& stats);
ChainStats read_chain_stats_csv(std::istream& in);
ChainStats read_chain_stats_csv(const std::filesystem::path& path);

struct FcsSpec {
  MethodVector methods;
  PredictorMatrix pred;
  LevelsSpec levels;
  int maxit = 10;
  int m = 5;
  /// Empty means dataset column order.
  std::vector<std::string> visit_order;
  UnivariateOptions options;

  /// Throws InvalidSpec / UnknownColumn.
  void validate(const Dataset& d) const;
};

/// {methods: {col: name}, predictor_matrix: {row: {col: code}}, levels:
/// {col: {level, clusters}}, maxit, m}. Missing predictor entries are 0.
nlohmann::json to_json(const FcsSpec& spec);
FcsSpec fcs_spec_from_json(const nlohmann::json& j, const Dataset& d);

struct FcsResult {
  ImputedStack stack;
  ChainStats stats;
  std::vector<std::string> warnings;
};

/// One chain: initialize every missing cell by a uniform draw from the
/// column's observed values (one draw per cluster for cluster-level methods),
/// then `maxit` cycles over the incomplete columns.
Dataset run_fcs_chain(RngStream& rng, const Dataset& d, const FcsSpec& spec, int chain,
                      ChainStats* stats = nullptr, std::vector<std::string>* warnings = nullptr);

/// m chains; chain c draws from base.split(c) so results do not depend on
/// `workers`. A chain failure is rethrown with its kind, naming the chain
/// and the column.
FcsResult run_fcs(const RngStream& base, const Dataset& d, const FcsSpec& spec, int workers = 1);

}  // namespace longimp
