#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "longimp/dataset.hpp"
#include "longimp/rng.hpp"

namespace longimp {

/// A factor with K levels is carried by K-1 latent normals. Latent j
/// (zero-based, j < K-1) maps to level j when it is the largest latent and
/// positive; when every latent is <= 0 the value is the last level. For a
/// binary column this reads: latent > 0 -> first level, latent <= 0 -> second.
int decode_latent(std::span<const double> z);
bool latent_in_region(int level, std::span<const double> z);

/// Open interval allowed for component j of a latent vector coding `level`,
/// holding the other components fixed.
struct Interval {
  double lower;
  double upper;
  bool contains(double v) const { return v > lower && v < upper; }
};
Interval latent_interval(int level, std::span<const double> z, std::size_t j);

/// A latent vector consistent with `level` (standard-normal based).
std::vector<double> sample_latent(RngStream& rng, int level, int n_levels);

/// How a list of dataset columns maps onto latent (working) columns.
struct LatentBlock {
  std::size_t column;  // dataset column
  int first;           // first working column
  int dims;            // 1 for continuous, K-1 for factors
  int n_levels;        // 0 for continuous
  bool latent;         // factor carried by latents
};

struct LatentLayout {
  std::vector<LatentBlock> blocks;
  std::vector<std::string> names;  // working column names
  int width = 0;
};

/// Factors use latents when `latent_factors` is set; otherwise they enter as
/// their level index (rounded back on decode).
LatentLayout make_layout(const Dataset& d, const std::vector<std::string>& columns,
                         bool latent_factors = true);

/// Working matrix (rows of `d` x layout.width) plus a per-cell "free" mask.
/// Observed factor cells get latents inside their level's region; missing
/// cells are 0 and free. Throws UnknownLevel for out-of-range factor cells.
struct LatentState {
  Eigen::MatrixXd z;
  std::vector<std::vector<std::uint8_t>> free;  // [working column][row]
};
LatentState encode_latent(RngStream& rng, const Dataset& d, const LatentLayout& layout);

/// Writes decoded values into the missing cells of `d`'s layout columns.
/// Non-latent factor values are rounded to the nearest level index.
Dataset decode_latent(const Dataset& d, const LatentLayout& layout, const Eigen::MatrixXd& z);

/// Adaptive rounding of a binary column imputed on the continuous scale.
/// With w the mean of the completed column, the threshold is
/// c = w - Phi^-1(w) sqrt(w (1 - w)); imputed cells become 1 when > c, else 0.
/// Observed cells are returned unchanged. Throws DegenerateMean unless 0 < w < 1.
std::vector<double> adaptive_round(std::span<const double> completed,
                                   std::span<const std::uint8_t> imputed);
double adaptive_threshold(double mean);

}  // namespace longimp
