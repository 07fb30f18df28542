#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "longimp/rng.hpp"

namespace longimp {

/// One random-effect term: a grouping of the rows and its per-row design.
/// Levels are sampled one at a time, so they may be nested or crossed.
struct RandomLevel {
  std::vector<int> group;  // zero-based group per row
  int n_groups = 0;
  Eigen::MatrixXd z;       // rows x q, intercept first
};

struct GibbsDesign {
  Eigen::MatrixXd x;
  std::vector<RandomLevel> levels;
};

/// Univariate LMM sampled by Gibbs: flat prior on beta, inverse-Wishart(q+1, I)
/// on each random-effect covariance, Jeffreys prior on the residual variance.
/// State persists across calls so that a chain can resume it on every visit.
class LmmGibbs {
 public:
  /// With `unit_residual` the residual variance is held at 1 (latent targets).
  explicit LmmGibbs(bool unit_residual = false) : unit_residual_(unit_residual) {}

  /// One sweep using the rows with use[r] != 0 as data. Throws RankDeficient
  /// when the used rows do not identify beta.
  void sweep(RngStream& rng, const GibbsDesign& design, const Eigen::VectorXd& y,
             std::span<const std::uint8_t> use);

  /// x beta + sum of z b for every row, at the current draw.
  Eigen::VectorXd linear_predictor(const GibbsDesign& design) const;

  double residual_variance() const { return sigma2_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  const Eigen::MatrixXd& level_cov(std::size_t level) const { return psi_.at(level); }
  const Eigen::MatrixXd& effects(std::size_t level) const { return b_.at(level); }
  int sweeps() const { return sweeps_; }

 private:
  void initialize(const GibbsDesign& design, const Eigen::VectorXd& y,
                  std::span<const std::uint8_t> use);

  bool unit_residual_;
  int sweeps_ = 0;
  Eigen::VectorXd beta_;
  std::vector<Eigen::MatrixXd> b_;    // groups x q per level
  std::vector<Eigen::MatrixXd> psi_;  // q x q per level
  double sigma2_ = 1.0;
};

}  // namespace longimp
