#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimp/rng.hpp"

namespace longimp {

struct LinearDraw {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd beta_draw;
  double s2 = 0;  // residual mean square
  double sigma2_draw = 0;
  Eigen::MatrixXd xtx_inv;
  bool floored = false;  // s2 was 0 and replaced by kSigmaFloor
};

inline constexpr double kSigmaFloor = 1e-10;

/// OLS, then sigma2 ~ (n-p) s2 / chi2(n-p) and beta ~ N(beta_hat, sigma2 (X'X)^-1).
/// Throws RankDeficient when n <= p or X lacks full column rank.
LinearDraw fit_linear_and_draw(RngStream& rng, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               std::vector<std::string>* warnings = nullptr);

struct GlmFit {
  Eigen::VectorXd beta_hat;
  Eigen::MatrixXd cov_hat;  // inverse observed information
  double loglik = 0;
  bool converged = false;
  int iterations = 0;
};

/// IRLS with step halving. Stops when max |score| < 1e-8 or the relative
/// loglik change is < 1e-10; at most 100 iterations. Throws
/// PerfectSeparation once any |beta| exceeds 30, RankDeficient for a
/// singular design.
GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Proportional odds: logit P(Y <= k) = zeta_k - x'beta, k = 0..K-2, with no
/// intercept column in x. beta_hat stacks (zeta_0..zeta_{K-2}, beta).
/// `y` holds zero-based levels. Throws EmptyCategory, PerfectSeparation,
/// RankDeficient.
GlmFit fit_polr(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, int n_levels);

/// Category probabilities of a polr fit for linear predictor `eta`.
std::vector<double> polr_probabilities(const Eigen::VectorXd& zeta, double eta);

/// Column indices of a maximal linearly independent subset of x's columns,
/// in ascending order (pivoted QR, relative tolerance 1e-9).
std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& x);

}  // namespace longimp
