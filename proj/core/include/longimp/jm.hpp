#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimp/dataset.hpp"
#include "longimp/diagnostics.hpp"
#include "longimp/imputed_stack.hpp"
#include "longimp/latent.hpp"
#include "longimp/rng.hpp"

namespace longimp {

enum class CovMode { Common, ClusterSpecific };

std::string to_string(CovMode mode);
CovMode cov_mode_from_string(const std::string& text);

/// Joint multivariate normal imputation model. Intercepts are added to X,
/// X2 and Z automatically. Without `cluster` the model is single-level and
/// Y2, X2 and Z must be empty.
struct JmSpec {
  std::vector<std::string> y;   // incomplete row-level variables
  std::vector<std::string> y2;  // incomplete cluster-level variables
  std::vector<std::string> x;   // complete row-level predictors
  std::vector<std::string> x2;  // complete cluster-level predictors
  std::vector<std::string> z;   // random slopes
  std::string cluster;
  CovMode cov_mode = CovMode::Common;
  int nburn = 1000;
  int nbetween = 1000;
  int nimp = 5;
  /// Factors use latent normals; otherwise they are imputed as continuous
  /// and binary columns are adaptively rounded.
  bool latent_factors = true;
  /// Holds the random effects at zero (the model collapses to one level).
  bool zero_random_effects = false;

  bool clustered() const { return !cluster.empty(); }
  /// Throws InvalidSpec / UnknownColumn / TooFewClusters.
  void validate(const Dataset& d) const;
};

/// Degrees of freedom of the cluster-specific residual covariances.
int cluster_cov_dof(int p);

/// One Gibbs chain of the joint model. Each sweep draws B, the random
/// effects, B2, Psi, Omega (or the cluster Omegas and their scale), then the
/// missing cells from their row-wise conditionals, then a Metropolis-Hastings
/// refresh of the latents behind observed factor cells.
class JmSampler {
 public:
  JmSampler(RngStream& rng, const JmSpec& spec, const Dataset& d);
  ~JmSampler();
  JmSampler(JmSampler&&) noexcept;
  JmSampler& operator=(JmSampler&&) noexcept;

  void sweep(RngStream& rng);
  Dataset completed() const;

  const std::vector<std::string>& parameter_names() const;
  std::vector<double> parameters() const;

  /// Working (latent-scale) matrices for inspection.
  const Eigen::MatrixXd& working_y() const;
  const Eigen::MatrixXd& beta() const;
  /// Common Omega, or the mean of the cluster Omegas.
  Eigen::MatrixXd omega() const;
  const Eigen::MatrixXd& psi() const;
  const LatentLayout& layout() const;
  /// Acceptance rate of the latent refresh over the last sweep (NaN when no
  /// observed factor cells).
  double mh_acceptance() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct JmResult {
  ImputedStack stack;
  ChainTrace trace;
  std::vector<std::string> warnings;
};

/// nburn sweeps, then one completed dataset every nbetween sweeps until nimp
/// are collected. The trace records every sweep.
JmResult run_jm(RngStream& rng, const JmSpec& spec, const Dataset& d);

}  // namespace longimp
