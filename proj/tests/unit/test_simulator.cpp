#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "longimp/error.hpp"
#include "longimp/simulator.hpp"
#include "longimp/tabular.hpp"

using namespace longimp;

TEST(Simulator, DefaultShapeIsThreeWavesPerStudent) {
  const SimOutput out = simulate(SimConfig{});
  EXPECT_EQ(out.observed.n_rows(), 3600u);
  EXPECT_EQ(out.complete.n_rows(), 3600u);
  EXPECT_EQ(out.observed.column_names(),
            (std::vector<std::string>{"school", "id", "age", "sex", "ses", "numeracy_scorew1", "time", "prev_dep",
                                      "numeracy_score", "prev_sdq"}));
  std::set<double> times;
  const auto t = out.observed.index_of("time");
  for (std::size_t r = 0; r < out.observed.n_rows(); ++r) times.insert(out.observed.value(r, t));
  EXPECT_EQ(times, (std::set<double>{3, 5, 7}));
}

TEST(Simulator, ConfigOverrideChangesSize) {
  const SimConfig cfg = sim_config_from_json({{"n_students", 12}});
  EXPECT_EQ(simulate(cfg).observed.n_rows(), 36u);
}

TEST(Simulator, SameSeedSameData) {
  SimConfig cfg;
  cfg.n_students = 200;
  EXPECT_TRUE(simulate(cfg).observed == simulate(cfg).observed);
  SimConfig other = cfg;
  other.seed += 1;
  EXPECT_FALSE(simulate(cfg).observed == simulate(other).observed);
}

TEST(Simulator, CompleteDataHasNoMissingAndMasksOnlyAnalysisCells) {
  SimConfig cfg;
  cfg.n_students = 300;
  const SimOutput out = simulate(cfg);
  for (std::size_t c = 0; c < out.complete.n_cols(); ++c) EXPECT_TRUE(out.complete.column_complete(c));
  for (const char* name : {"school", "id", "age", "sex", "time", "prev_sdq"}) {
    EXPECT_TRUE(out.observed.column_complete(out.observed.index_of(name))) << name;
  }
  // Observed cells equal the complete data.
  for (std::size_t c = 0; c < out.observed.n_cols(); ++c)
    for (std::size_t r = 0; r < out.observed.n_rows(); ++r)
      if (!out.observed.is_missing(r, c)) ASSERT_EQ(out.observed.value(r, c), out.complete.value(r, c));
}

TEST(Simulator, TimeFixedVariablesConstantWithinStudent) {
  const SimOutput out = simulate(SimConfig{});
  const ReshapeMap map = infer_reshape_map(out.complete);
  EXPECT_EQ(map.stubs, (std::vector<std::string>{"prev_dep", "numeracy_score", "prev_sdq"}));
}

TEST(ClusterSizes, ScaledSizesSumToTotal) {
  const std::vector<double> raw{10.2, 33.7, 8.1, 65.9, 20.0};
  const auto sizes = scale_cluster_sizes(raw, 1200);
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), 0), 1200);
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  for (std::size_t i = 0; i + 1 < raw.size(); ++i) EXPECT_EQ(sizes[i], static_cast<int>(std::lround(raw[i] * 1200 / total)));
}

TEST(ClusterSizes, DrawnSizesRespectCountAndTotal) {
  SimConfig cfg;
  RngStream rng(3);
  const auto sizes = draw_cluster_sizes(rng, cfg);
  EXPECT_EQ(sizes.size(), 40u);
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), 0), 1200);
}

TEST(SimConfig, UnknownFieldReportsPointer) {
  try {
    sim_config_from_json({{"outcome", {{"slope", 1.0}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadConfig);
    EXPECT_NE(std::string(e.what()).find("/outcome/slope"), std::string::npos);
  }
}

TEST(SimConfig, WrongTypeReportsPointer) {
  try {
    sim_config_from_json({{"n_schools", "forty"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadConfig);
    EXPECT_NE(std::string(e.what()).find("/n_schools"), std::string::npos);
  }
}

TEST(SimConfig, InvalidProbabilitiesRejected) {
  SimConfig cfg;
  cfg.ses_probs = {0.5, 0.5, 0.5, 0.0, 0.0};
  EXPECT_THROW(cfg.validate(), Error);
  SimConfig json_round = sim_config_from_json(to_json(SimConfig{}));
  EXPECT_EQ(to_json(json_round), to_json(SimConfig{}));
}
