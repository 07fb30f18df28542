#include "longimp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"
#include "longimp/tabular.hpp"

namespace longimp {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::BaselineNumeracy, intercept, male, age, ses, sd_resid)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::Depression, intercept, age, wave, male, numeracy_w1,
                                   ses, sd_school, sd_student)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::Sdq, intercept, depression, wave, sd_school,
                                   sd_student, sd_resid)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::Outcome, intercept, depression, wave, age, male,
                                   numeracy_w1, ses, sdq, sd_school, sd_student, sd_resid)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::MissingBaseline, intercept, age, sex)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::MissingDepression, intercept, age, wave, male,
                                   numeracy_w1, ses, next_outcome, sdq, sd_school, sd_student)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig::MissingOutcome, intercept, age, wave, male,
                                   numeracy_w1, ses, prev_depression, sdq, sd_school, sd_student)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimConfig, n_schools, n_students, size_log_location,
                                   size_log_scale, size_lower, size_upper, age_lower, age_upper,
                                   p_male, ses_probs, exposure_waves, outcome_waves,
                                   baseline_numeracy, depression, sdq, outcome, missing_ses,
                                   missing_numeracy_w1, missing_depression, missing_outcome, seed)

namespace {

void bad(const std::string& pointer, const std::string& what) {
  throw Error(ErrorKind::BadConfig, pointer + ": " + what);
}

// Every key in `patch` must exist in `schema` with a compatible type.
void check_against(const nlohmann::json& schema, const nlohmann::json& patch, const std::string& ptr) {
  if (schema.is_object()) {
    if (!patch.is_object()) bad(ptr.empty() ? "/" : ptr, "expected an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
      if (!schema.contains(it.key())) bad(ptr + "/" + it.key(), "unknown field");
      check_against(schema.at(it.key()), it.value(), ptr + "/" + it.key());
    }
  } else if (schema.is_array()) {
    if (!patch.is_array()) bad(ptr, "expected an array");
    if (patch.size() != schema.size()) {
      bad(ptr, "expected " + std::to_string(schema.size()) + " elements");
    }
    for (std::size_t i = 0; i < patch.size(); ++i) {
      check_against(schema[i], patch[i], ptr + "/" + std::to_string(i));
    }
  } else if (schema.is_number()) {
    if (!patch.is_number()) bad(ptr, "expected a number");
    if ((schema.is_number_integer() || schema.is_number_unsigned()) && !patch.is_number_integer() &&
        !patch.is_number_unsigned()) {
      bad(ptr, "expected an integer");
    }
  }
}

double ses_term(const SesEffects& effects, int ses) { return ses == 0 ? 0.0 : effects[ses - 1]; }

enum Col { kSchool, kId, kAge, kSex, kSes, kNumW1, kTime, kDep, kNum, kSdq, kNCols };

std::vector<ColumnSpec> cats_columns() {
  return {
      ColumnSpec::continuous("school", Role::ClusterId),
      ColumnSpec::continuous("id", Role::UnitId),
      ColumnSpec::continuous("age", Role::Analysis),
      ColumnSpec::binary("sex", Role::Analysis),
      ColumnSpec::categorical("ses", {"0", "1", "2", "3", "4"}, Role::Analysis),
      ColumnSpec::continuous("numeracy_scorew1", Role::Analysis),
      ColumnSpec::continuous("time", Role::Time),
      ColumnSpec::binary("prev_dep", Role::Analysis),
      ColumnSpec::continuous("numeracy_score", Role::Analysis),
      ColumnSpec::continuous("prev_sdq", Role::Auxiliary),
  };
}

}  // namespace

void SimConfig::validate() const {
  if (n_schools < 1) bad("/n_schools", "must be >= 1");
  if (n_students < 1) bad("/n_students", "must be >= 1");
  if (!(size_lower >= 1.0)) bad("/size_lower", "must be >= 1");
  if (!(size_lower < size_upper)) bad("/size_upper", "must exceed size_lower");
  if (!(size_log_scale >= 0)) bad("/size_log_scale", "must be >= 0");
  if (!(age_lower < age_upper)) bad("/age_upper", "must exceed age_lower");
  if (!(p_male >= 0 && p_male <= 1)) bad("/p_male", "must be a probability");
  double total = 0;
  for (double p : ses_probs) {
    if (!(p >= 0)) bad("/ses_probs", "probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) bad("/ses_probs", "probabilities must sum to 1");
  const double sds[] = {baseline_numeracy.sd_resid, depression.sd_school, depression.sd_student,
                        sdq.sd_school, sdq.sd_student, sdq.sd_resid, outcome.sd_school,
                        outcome.sd_student, outcome.sd_resid, missing_depression.sd_school,
                        missing_depression.sd_student, missing_outcome.sd_school,
                        missing_outcome.sd_student};
  for (double s : sds) {
    if (!(s >= 0)) bad("/", "standard deviations must be >= 0");
  }
}

nlohmann::json to_json(const SimConfig& cfg) {
  nlohmann::json j;
  to_json(j, cfg);
  return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base) {
  nlohmann::json schema = to_json(base);
  check_against(schema, j, "");
  schema.merge_patch(j);
  SimConfig cfg;
  try {
    schema.get_to(cfg);
  } catch (const nlohmann::json::exception& e) {
    bad("/", e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<int> scale_cluster_sizes(const std::vector<double>& raw, int total) {
  const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
  const double factor = static_cast<double>(total) / sum;
  std::vector<int> sizes(raw.size());
  long long acc = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    sizes[i] = static_cast<int>(std::lround(raw[i] * factor));
    acc += sizes[i];
  }
  // Deficit goes to the last cluster; excess is deducted from it (spilling
  // backwards only if the last cluster would go negative).
  long long diff = static_cast<long long>(total) - acc;
  for (std::size_t i = raw.size(); i-- > 0 && diff != 0;) {
    long long next = sizes[i] + diff;
    if (next >= 0) {
      sizes[i] = static_cast<int>(next);
      diff = 0;
    } else {
      diff = next;
      sizes[i] = 0;
    }
  }
  return sizes;
}

std::vector<int> draw_cluster_sizes(RngStream& rng, const SimConfig& cfg) {
  cfg.validate();
  if (cfg.n_schools == 1) return {cfg.n_students};
  std::vector<double> raw;
  raw.reserve(static_cast<std::size_t>(cfg.n_schools));
  while (raw.size() < static_cast<std::size_t>(cfg.n_schools)) {
    double x = std::exp(cfg.size_log_location + cfg.size_log_scale * rng.normal());
    if (x >= cfg.size_lower && x <= cfg.size_upper) raw.push_back(x);
  }
  return scale_cluster_sizes(raw, cfg.n_students);
}

Dataset generate_complete(RngStream& rng, const SimConfig& cfg) {
  cfg.validate();
  const auto sizes = draw_cluster_sizes(rng, cfg);
  const auto n = static_cast<std::size_t>(cfg.n_students);
  const std::size_t n_waves = cfg.outcome_waves.size();

  std::vector<int> school(n);
  {
    std::size_t j = 0;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      for (int k = 0; k < sizes[s]; ++k) school[j++] = static_cast<int>(s);
    }
  }
  const auto n_schools = sizes.size();
  std::vector<double> age(n), male(n), num_w1(n);
  std::vector<int> ses(n);
  for (std::size_t j = 0; j < n; ++j) {
    age[j] = cfg.age_lower + (cfg.age_upper - cfg.age_lower) * rng.uniform();
  }
  for (std::size_t j = 0; j < n; ++j) male[j] = rng.bernoulli(cfg.p_male) ? 1.0 : 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double u = rng.uniform();
    int q = 0;
    double cum = cfg.ses_probs[0];
    while (q < 4 && u >= cum) cum += cfg.ses_probs[static_cast<std::size_t>(++q)];
    ses[j] = q;
  }
  const auto& bn = cfg.baseline_numeracy;
  for (std::size_t j = 0; j < n; ++j) {
    num_w1[j] = bn.intercept + bn.male * male[j] + bn.age * age[j] + ses_term(bn.ses, ses[j]) +
                bn.sd_resid * rng.normal();
  }

  auto school_effects = [&](double sd) {
    std::vector<double> e(n_schools);
    for (auto& v : e) v = sd * rng.normal();
    return e;
  };
  auto student_effects = [&](double sd) {
    std::vector<double> e(n);
    for (auto& v : e) v = sd * rng.normal();
    return e;
  };

  const auto& dp = cfg.depression;
  auto dep_school = school_effects(dp.sd_school);
  auto dep_student = student_effects(dp.sd_student);
  std::vector<std::array<double, 3>> dep(n), sdq(n), outcome(n);
  for (std::size_t w = 0; w < n_waves; ++w) {
    const double k = cfg.exposure_waves[w];
    for (std::size_t j = 0; j < n; ++j) {
      double lp = dp.intercept + dp.age * age[j] + dp.wave * k + dp.male * male[j] +
                  dp.numeracy_w1 * num_w1[j] + ses_term(dp.ses, ses[j]) +
                  dep_school[static_cast<std::size_t>(school[j])] + dep_student[j];
      dep[j][w] = rng.bernoulli(expit(lp)) ? 1.0 : 0.0;
    }
  }
  const auto& sq = cfg.sdq;
  auto sdq_school = school_effects(sq.sd_school);
  auto sdq_student = student_effects(sq.sd_student);
  for (std::size_t w = 0; w < n_waves; ++w) {
    const double k = cfg.exposure_waves[w];
    for (std::size_t j = 0; j < n; ++j) {
      sdq[j][w] = sq.intercept + sq.depression * dep[j][w] + sq.wave * k +
                  sdq_school[static_cast<std::size_t>(school[j])] + sdq_student[j] +
                  sq.sd_resid * rng.normal();
    }
  }
  const auto& oc = cfg.outcome;
  auto out_school = school_effects(oc.sd_school);
  auto out_student = student_effects(oc.sd_student);
  for (std::size_t w = 0; w < n_waves; ++w) {
    const double k = cfg.outcome_waves[w];
    for (std::size_t j = 0; j < n; ++j) {
      outcome[j][w] = oc.intercept + oc.depression * dep[j][w] + oc.wave * k + oc.age * age[j] +
                      oc.male * male[j] + oc.numeracy_w1 * num_w1[j] + ses_term(oc.ses, ses[j]) +
                      oc.sdq * sdq[j][w] + out_school[static_cast<std::size_t>(school[j])] +
                      out_student[j] + oc.sd_resid * rng.normal();
    }
  }

  const std::size_t rows = n * n_waves;
  std::vector<std::vector<double>> v(kNCols, std::vector<double>(rows));
  std::size_t r = 0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t w = 0; w < n_waves; ++w, ++r) {
      v[kSchool][r] = school[j] + 1;
      v[kId][r] = static_cast<double>(j + 1);
      v[kAge][r] = age[j];
      v[kSex][r] = male[j];
      v[kSes][r] = ses[j];
      v[kNumW1][r] = num_w1[j];
      v[kTime][r] = cfg.outcome_waves[w];
      v[kDep][r] = dep[j][w];
      v[kNum][r] = outcome[j][w];
      v[kSdq][r] = sdq[j][w];
    }
  }
  std::vector<Mask> m(kNCols, Mask(rows, 0));
  return Dataset(cats_columns(), std::move(v), std::move(m), Shape::Long);
}

Dataset impose_missingness(RngStream& rng, const SimConfig& cfg, const Dataset& complete) {
  const std::size_t n_waves = cfg.outcome_waves.size();
  const std::size_t rows = complete.n_rows();
  const std::size_t n = rows / n_waves;
  auto col = [&](const char* name) { return complete.values(complete.index_of(name)); };
  auto school = col("school");
  auto age = col("age");
  auto sex = col("sex");
  auto ses = col("ses");
  auto num_w1 = col("numeracy_scorew1");
  auto dep = col("prev_dep");
  auto outcome = col("numeracy_score");
  auto sdq = col("prev_sdq");

  int n_schools = 0;
  for (double s : school) n_schools = std::max(n_schools, static_cast<int>(s));

  // Row of student j at wave w is j * n_waves + w (generate_complete layout).
  std::vector<std::uint8_t> miss_ses(n), miss_w1(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t r = j * n_waves;
    const auto& ms = cfg.missing_ses;
    miss_ses[j] = rng.bernoulli(expit(ms.intercept + ms.age * age[r] + ms.sex * sex[r]));
  }
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t r = j * n_waves;
    const auto& mw = cfg.missing_numeracy_w1;
    miss_w1[j] = rng.bernoulli(expit(mw.intercept + mw.age * age[r] + mw.sex * sex[r]));
  }

  auto effects = [&](std::size_t count, double sd) {
    std::vector<double> e(count);
    for (auto& v : e) v = sd * rng.normal();
    return e;
  };

  const auto& md = cfg.missing_depression;
  auto md_school = effects(static_cast<std::size_t>(n_schools), md.sd_school);
  auto md_student = effects(n, md.sd_student);
  std::vector<std::uint8_t> miss_dep(rows), miss_out(rows);
  for (std::size_t w = 0; w < n_waves; ++w) {
    const double k = cfg.exposure_waves[w];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t r = j * n_waves + w;
      const int q = static_cast<int>(ses[r]);
      // The outcome measured right after exposure wave k lives on the same row.
      double lp = md.intercept + md.age * age[r] + md.wave * k + md.male * sex[r] +
                  md.numeracy_w1 * num_w1[r] + ses_term(md.ses, q) + md.next_outcome * outcome[r] +
                  md.sdq * sdq[r] + md_school[static_cast<std::size_t>(school[r]) - 1] +
                  md_student[j];
      miss_dep[r] = rng.bernoulli(expit(lp));
    }
  }
  const auto& mo = cfg.missing_outcome;
  auto mo_school = effects(static_cast<std::size_t>(n_schools), mo.sd_school);
  auto mo_student = effects(n, mo.sd_student);
  for (std::size_t w = 0; w < n_waves; ++w) {
    const double k = cfg.outcome_waves[w];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t r = j * n_waves + w;
      const int q = static_cast<int>(ses[r]);
      double lp = mo.intercept + mo.age * age[r] + mo.wave * k + mo.male * sex[r] +
                  mo.numeracy_w1 * num_w1[r] + ses_term(mo.ses, q) + mo.prev_depression * dep[r] +
                  mo.sdq * sdq[r] + mo_school[static_cast<std::size_t>(school[r]) - 1] +
                  mo_student[j];
      miss_out[r] = rng.bernoulli(expit(lp));
    }
  }

  std::vector<std::vector<double>> values(complete.n_cols());
  std::vector<Mask> masks(complete.n_cols());
  for (std::size_t c = 0; c < complete.n_cols(); ++c) {
    auto v = complete.values(c);
    values[c].assign(v.begin(), v.end());
    masks[c].assign(rows, 0);
  }
  const std::size_t c_ses = complete.index_of("ses");
  const std::size_t c_w1 = complete.index_of("numeracy_scorew1");
  const std::size_t c_dep = complete.index_of("prev_dep");
  const std::size_t c_out = complete.index_of("numeracy_score");
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t j = r / n_waves;
    masks[c_ses][r] = miss_ses[j];
    masks[c_w1][r] = miss_w1[j];
    masks[c_dep][r] = miss_dep[r];
    masks[c_out][r] = miss_out[r];
  }
  return complete.with_cells(std::move(values), std::move(masks));
}

SimOutput simulate(const SimConfig& cfg) {
  RngStream rng(cfg.seed, 0);
  SimOutput out;
  out.complete = generate_complete(rng, cfg);
  out.observed = impose_missingness(rng, cfg, out.complete);
  out.truth = cfg;
  return out;
}

double incomplete_fraction(const Dataset& d, Shape shape) {
  Dataset view = d;
  if (d.shape() != shape) {
    if (shape == Shape::Wide) {
      view = reshape_long_to_wide(d, infer_reshape_map(d));
    } else {
      view = reshape_wide_to_long(d, infer_wide_map(d));
    }
  }
  if (view.n_rows() == 0) return 0.0;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < view.n_cols(); ++c) {
    if (view.column(c).role == Role::Analysis) cols.push_back(c);
  }
  std::size_t incomplete = 0;
  for (std::size_t r = 0; r < view.n_rows(); ++r) {
    for (auto c : cols) {
      if (view.is_missing(r, c)) {
        ++incomplete;
        break;
      }
    }
  }
  return static_cast<double>(incomplete) / static_cast<double>(view.n_rows());
}

}  // namespace longimp
