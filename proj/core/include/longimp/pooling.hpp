#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "longimp/dataset.hpp"
#include "longimp/lmm.hpp"

namespace longimp {

/// Estimates of one completed-data fit. `extras` are pooled by their mean
/// only (variance components).
struct FitSummary {
  std::vector<std::string> names;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  std::vector<std::pair<std::string, double>> extras;
  bool converged = true;
};

/// Extras are "var(<group>)" and "sd(<group>)" per component, residual last.
FitSummary summarize(const LmmFit& fit);
/// Reads the fit JSON written for an LmmFit.
FitSummary fit_summary_from_json(const nlohmann::json& j);

struct PooledParam {
  std::string name;
  double estimate = 0;  // Q-bar
  double within = 0;    // W
  double between = 0;   // B
  double total = 0;     // T
  double se = 0;
  double df = 0;        // infinite when B == 0
  double fmi = 0;
};

struct PooledResult {
  std::vector<PooledParam> params;
  std::vector<std::pair<std::string, double>> extras;
  int m = 0;
  int n_nonconverged = 0;
  int n_excluded = 0;
};

/// Rubin's rules with the classical degrees of freedom
/// df = (m-1)(1 + W / ((1+1/m) B))^2 and FMI = (1+1/m) B / T.
/// With `exclude_nonconverged` the non-converged fits are dropped first.
/// Throws TooFewImputations (m < 2) and MisalignedParams.
PooledResult pool(std::span<const FitSummary> fits, bool exclude_nonconverged = false);

nlohmann::json to_json(const PooledResult& result);
/// parameter,estimate,se,df,fmi; variance components follow with NA
/// inference columns. Infinite df is written as Inf.
std::string pooled_csv(const PooledResult& result);

/// ceil(100 x incomplete fraction) in the given shape, at least 2 (with a
/// warning when raised).
int imputation_count_rule(const Dataset& d, Shape shape, std::vector<std::string>* warnings = nullptr);

}  // namespace longimp
