#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "longimp/dataset.hpp"
#include "longimp/rng.hpp"

namespace longimp {

/// SES effects are listed for quintiles 2..5 (quintile 1 is the reference).
using SesEffects = std::array<double, 4>;

struct SimConfig {
  int n_schools = 40;
  int n_students = 1200;
  // Truncated log-normal law of the raw school sizes before rescaling.
  double size_log_location = 3.3;
  double size_log_scale = 0.5;
  double size_lower = 8;
  double size_upper = 66;

  double age_lower = 7;
  double age_upper = 10;
  double p_male = 0.5;
  std::array<double, 5> ses_probs{0.1, 0.1, 0.2, 0.3, 0.3};
  std::array<int, 3> exposure_waves{2, 4, 6};
  std::array<int, 3> outcome_waves{3, 5, 7};

  struct BaselineNumeracy {
    double intercept = -1.2, male = 0.22, age = 0.08;
    SesEffects ses{0.01, 0.37, 0.33, 0.65};
    double sd_resid = 1.0;
  } baseline_numeracy;

  struct Depression {
    double intercept = -4.0, age = 0.31, wave = 0.08, male = -0.52, numeracy_w1 = -0.05;
    SesEffects ses{-0.3, -0.4, -0.57, -0.86};
    double sd_school = 0.25, sd_student = 1.5;
  } depression;

  struct Sdq {
    double intercept = 16, depression = 1.6, wave = -0.1;
    double sd_school = 0.8, sd_student = 4.0, sd_resid = 3.0;
  } sdq;

  struct Outcome {
    double intercept = 2.0, depression = -0.02, wave = -0.01, age = -0.2, male = 0.15,
           numeracy_w1 = 0.7;
    SesEffects ses{-0.02, -0.10, 0.02, -0.02};
    double sdq = -0.01;
    double sd_school = 0.05, sd_student = 0.25, sd_resid = 0.25;
  } outcome;

  struct MissingBaseline {
    double intercept, age, sex;
  };
  MissingBaseline missing_ses{-1.5, 0.03, 0.01};
  MissingBaseline missing_numeracy_w1{-2.1, 0.05, 0.02};

  struct MissingDepression {
    double intercept = -8.0, age = 0.72, wave = -0.11, male = 0.16, numeracy_w1 = -0.17;
    SesEffects ses{-0.39, 0.27, 0.19, -0.03};
    double next_outcome = -0.13, sdq = 0.04;
    double sd_school = 0.01, sd_student = 0.05;
  } missing_depression;

  struct MissingOutcome {
    double intercept = -23, age = 1.77, wave = 0.7, male = 0.01, numeracy_w1 = -0.70;
    SesEffects ses{-4.9, -1.9, 2.19, -2.35};
    double prev_depression = -0.25, sdq = 0.11;
    double sd_school = 0.4, sd_student = 2.0;
  } missing_outcome;

  std::uint64_t seed = 20240607;

  /// Throws BadConfig naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const SimConfig& cfg);
/// Fields absent from `j` keep their defaults; unknown or mistyped fields
/// raise BadConfig with the JSON-pointer location.
SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});

struct SimOutput {
  Dataset complete;
  Dataset observed;
  SimConfig truth;
};

/// Raw truncated log-normal sizes, then scale-round-adjust so they sum to
/// n_students exactly.
std::vector<int> draw_cluster_sizes(RngStream& rng, const SimConfig& cfg);
/// The deterministic half of draw_cluster_sizes: scales `raw` by
/// total / sum(raw), rounds, and lets the last cluster absorb the remainder.
std::vector<int> scale_cluster_sizes(const std::vector<double>& raw, int total);

/// Long layout: school, id, age, sex, ses, numeracy_scorew1, time, prev_dep,
/// numeracy_score, prev_sdq; three rows per student at the outcome waves.
Dataset generate_complete(RngStream& rng, const SimConfig& cfg);
Dataset impose_missingness(RngStream& rng, const SimConfig& cfg, const Dataset& complete);
/// Complete data then masks, both from stream (cfg.seed, 0).
SimOutput simulate(const SimConfig& cfg);

/// Fraction of rows with at least one masked analysis-role cell, evaluated
/// after converting `d` to `shape` when needed.
double incomplete_fraction(const Dataset& d, Shape shape);

}  // namespace longimp
