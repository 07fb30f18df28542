#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimp/dataset.hpp"
#include "longimp/lmm_gibbs.hpp"
#include "longimp/rng.hpp"

namespace longimp {

enum class UniMethod {
  None,
  Norm,
  Logreg,
  Polr,
  Pmm,
  Pan2l,
  Latent2l,
  Pmm2l,
  Only2lNorm,
  Only2lPmm,
  MlLmerContinuous,
  MlLmerPmm,
};

std::string to_string(UniMethod m);
/// Accepts the names used in method vectors ("norm", "2l.pan", ...);
/// "2l.jomo" is read as 2l.latent. Throws UnsupportedMethod.
UniMethod uni_method_from_string(const std::string& text);
/// Methods that take a cluster grouping (2l.*, 2lonly.*, ml.lmer.*).
bool is_multilevel(UniMethod m);
bool uses_pmm(UniMethod m);

/// Column name -> method. Columns absent from the map are not imputed.
using MethodVector = std::map<std::string, UniMethod>;

/// Square matrix of predictor codes indexed by column name:
/// 0 excluded, 1 fixed effect, 2 fixed effect plus random slope,
/// 3 fixed effect plus cluster mean, -2 cluster grouping variable.
class PredictorMatrix {
 public:
  PredictorMatrix() = default;
  /// All zeros.
  explicit PredictorMatrix(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  /// Throws UnknownColumn.
  std::size_t index_of(const std::string& name) const;

  int operator()(std::size_t row, std::size_t col) const { return codes_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)); }
  int at(const std::string& row, const std::string& col) const;
  void set(const std::string& row, const std::string& col, int code);
  /// Sets `col` in every row except its own.
  void set_column(const std::string& col, int code);
  const Eigen::MatrixXi& codes() const { return codes_; }

  /// Throws InvalidSpec for unknown codes, a non-zero diagonal or more than
  /// one grouping variable in a row.
  void validate() const;
  bool operator==(const PredictorMatrix& other) const {
    return names_ == other.names_ && codes_ == other.codes_;
  }

 private:
  std::vector<std::string> names_;
  Eigen::MatrixXi codes_;
};

/// Measurement level of an incomplete column for the ml.lmer methods:
/// `level` empty means the row level, otherwise the column is constant within
/// that cluster variable. `clusters` lists the grouping variables the column
/// varies within (random intercepts of its imputation model).
struct VariableLevel {
  std::string level;
  std::vector<std::string> clusters;
};
using LevelsSpec = std::map<std::string, VariableLevel>;

/// Completed working copy of a dataset while imputing. Masks stay those of
/// the original; values are filled everywhere.
class WorkingData {
 public:
  explicit WorkingData(const Dataset& d);
  const Dataset& original() const { return original_; }
  std::vector<double>& column(std::size_t c) { return values_[c]; }
  const std::vector<double>& column(std::size_t c) const { return values_[c]; }
  std::span<const std::uint8_t> missing(std::size_t c) const { return original_.mask(c); }
  /// Completed dataset (no masked cells).
  Dataset completed() const;

 private:
  Dataset original_;
  std::vector<std::vector<double>> values_;
};

struct UnivariateOptions {
  int pmm_donors = 5;
  /// On PerfectSeparation, logreg and polr fall back to pmm with a warning;
  /// otherwise the error propagates.
  bool separation_fallback = true;
  int first_visit_sweeps = 15;
  int later_visit_sweeps = 5;
};

/// Sampler state a chain carries across visits of the same column.
struct SamplerCache {
  std::map<std::size_t, LmmGibbs> lmm;
  std::map<std::size_t, Eigen::VectorXd> latent;
  std::map<std::size_t, int> visits;
};

/// Fixed and random designs for one target, built from its predictor row.
struct TargetDesign {
  Eigen::MatrixXd x;  // intercept first
  Eigen::MatrixXd z;  // intercept plus random slopes
  std::vector<std::string> names;
  std::optional<std::size_t> group_column;
};

/// Factor predictors enter as level indicators (first level dropped);
/// binary predictors as their index. Code 3 appends the cluster mean of each
/// design column; code 2 adds the column to z. Codes 2 and 3 act as 1 when
/// `multilevel` is false.
TargetDesign build_target_design(const WorkingData& w, std::size_t target,
                                 const PredictorMatrix& pred, bool multilevel);

/// For each target prediction, one of the `k` donors whose predictions are
/// nearest, chosen uniformly. Returns donor positions.
std::vector<std::size_t> pmm_match(RngStream& rng, std::span<const double> donor_pred,
                                   std::span<const double> target_pred, int k);

/// Redraws the missing cells of `target` in `w`. Throws PerfectSeparation
/// (without fallback), TooFewDonors when a pmm method has no donor,
/// RankDeficient, InvalidSpec for method/kind mismatches.
void impute_univariate(RngStream& rng, UniMethod method, std::size_t target,
                       const PredictorMatrix& pred, const LevelsSpec& levels, WorkingData& w,
                       SamplerCache& cache, const UnivariateOptions& options,
                       std::vector<std::string>* warnings = nullptr);

}  // namespace longimp
