#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "longimp/dataset.hpp"
#include "longimp/formula.hpp"

namespace longimp {

enum class Criterion { ML, REML };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& text);

struct VarianceComponent {
  std::string group;  // grouping factor, or "Residual"
  double variance = 0;
  double sd = 0;
  bool boundary = false;
};

struct LmmFit {
  std::string formula;
  Criterion criterion = Criterion::REML;
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::MatrixXd cov;
  /// Random intercepts outermost first, then the residual.
  std::vector<VarianceComponent> components;
  double loglik = 0;
  double deviance = 0;
  std::size_t n_obs = 0;
  std::vector<std::size_t> n_groups;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;

  const VarianceComponent& residual() const { return components.back(); }
};

/// Nested random-intercept LMM with one or two grouping factors. Variance
/// ratios are optimized on the profiled (restricted) deviance: a coarse
/// start, up to 500 coordinate refinements, then at most 50 projected Newton
/// steps. Fixed effects are GLS at the optimum with SEs from sigma^2 (X'H^-1 X)^-1.
/// Collinear fixed-effect columns are dropped with a warning.
LmmFit fit_lmm(const ModelFormula& formula, const Dataset& d, Criterion criterion = Criterion::REML);

/// Profiled deviance at variance ratios gamma_k = sigma_k^2 / sigma_e^2
/// (outermost first). Exposed for the deviance-grid checks.
double lmm_profiled_deviance(const ModelFormula& formula, const Dataset& d, Criterion criterion,
                             const std::vector<double>& gamma);

/// Deviance at explicit components (random-intercept variances outermost
/// first, then residual variance), beta profiled out.
double lmm_deviance_at(const ModelFormula& formula, const Dataset& d, Criterion criterion,
                       const std::vector<double>& variances);

nlohmann::json to_json(const LmmFit& fit);
LmmFit lmm_fit_from_json(const nlohmann::json& j);

}  // namespace longimp
