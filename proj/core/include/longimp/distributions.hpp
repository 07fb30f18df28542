#pragma once

#include <span>

#include <Eigen/Dense>

#include "longimp/rng.hpp"

namespace longimp {

struct MvnParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  /// Throws NotPositiveDefinite when cov is asymmetric (> 1e-10) or its
  /// Cholesky factorization fails.
  void validate() const;
};

/// Lower Cholesky factor; throws NotPositiveDefinite.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& spd);
/// Inverse of an SPD matrix via Cholesky; throws NotPositiveDefinite.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& spd);
bool is_spd(const Eigen::MatrixXd& m);

Eigen::VectorXd standard_normal_vector(RngStream& rng, Eigen::Index n);

/// mean + L z with L the lower Cholesky factor of cov.
Eigen::VectorXd mvn_draw(RngStream& rng, const MvnParams& params);
Eigen::VectorXd mvn_draw_with_factor(RngStream& rng, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& lower);

/// Distribution of the unobserved coordinates given the observed ones.
MvnParams conditional_mvn(const MvnParams& params, std::span<const int> observed_idx,
                          const Eigen::VectorXd& observed_vals);

/// Bartlett decomposition: scale = L L', W = L A A' L'.
Eigen::MatrixXd wishart_draw(RngStream& rng, const Eigen::MatrixXd& scale, double dof);
/// Inverse of a Wishart(scale^-1, dof) draw; E = scale / (dof - p - 1).
Eigen::MatrixXd inv_wishart_draw(RngStream& rng, const Eigen::MatrixXd& scale, double dof);

/// Draw from N(mean, sd^2) restricted to (lower, upper); bounds may be
/// infinite. Inverse-CDF inside 4 sd, exponential/uniform rejection beyond.
double trunc_normal_draw(RngStream& rng, double mean, double sd, double lower, double upper);

/// M + Lr Z Lc' with Z iid N(0,1): a matrix-normal draw with row covariance
/// Lr Lr' and column covariance Lc Lc'.
Eigen::MatrixXd matrix_normal_draw(RngStream& rng, const Eigen::MatrixXd& mean,
                                   const Eigen::MatrixXd& row_lower,
                                   const Eigen::MatrixXd& col_lower);

double normal_cdf(double x);
double normal_quantile(double p);
double expit(double x);
double logit(double p);

}  // namespace longimp
