#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "longimp/error.hpp"
#include "longimp/io.hpp"
#include "longimp/tabular.hpp"

using namespace longimp;
using longimp::testing::make_dataset;
using longimp::testing::NA;

namespace {

ReshapeMap panel_map(const std::vector<int>& times) {
  ReshapeMap map;
  map.stubs = {"y", "b"};
  map.times = times;
  map.time_fixed = {"school", "id", "f", "g"};
  return map;
}

Dataset small_long() {
  return make_dataset({ColumnSpec::continuous("id", Role::UnitId), ColumnSpec::continuous("sex"),
                       ColumnSpec::continuous("time", Role::Time), ColumnSpec::continuous("y")},
                      {{1, 1, 2, 2}, {0, 0, 1, 1}, {3, 5, 3, 5}, {1.5, NA, 2.5, 3.5}});
}

}  // namespace

TEST(Reshape, LongToWideNamesAndCells) {
  const Dataset wide = reshape_long_to_wide(small_long(), infer_reshape_map(small_long()));
  EXPECT_EQ(wide.shape(), Shape::Wide);
  EXPECT_EQ(wide.column_names(), (std::vector<std::string>{"id", "sex", "y.3", "y.5"}));
  ASSERT_EQ(wide.n_rows(), 2u);
  EXPECT_DOUBLE_EQ(wide.value(0, wide.index_of("y.3")), 1.5);
  EXPECT_TRUE(wide.is_missing(0, wide.index_of("y.5")));
  EXPECT_DOUBLE_EQ(wide.value(1, wide.index_of("y.5")), 3.5);
}

TEST(Reshape, RoundTripIdentityOnRandomBalancedPanels) {
  std::mt19937_64 gen(11);
  for (int rep = 0; rep < 1000; ++rep) {
    std::uniform_int_distribution<int> n(1, 12), k(1, 4);
    std::vector<int> times;
    for (int t = 1, nt = k(gen); t <= nt; ++t) times.push_back(2 * t + 1);
    const Dataset d = longimp::testing::random_panel(gen, n(gen), times, 0.3);
    const ReshapeMap map = panel_map(times);
    const Dataset back = reshape_wide_to_long(reshape_long_to_wide(d, map), map);
    ASSERT_TRUE(back == d) << "replicate " << rep;
  }
}

TEST(Reshape, UnbalancedInputWarnsAndMaterializesWave) {
  Dataset d = make_dataset({ColumnSpec::continuous("id", Role::UnitId), ColumnSpec::continuous("time", Role::Time),
                            ColumnSpec::continuous("y")},
                           {{1, 1, 2}, {3, 5, 3}, {1, 2, 3}});
  ReshapeMap map;
  map.stubs = {"y"};
  map.times = {3, 5};
  map.time_fixed = {"id"};
  std::vector<std::string> warnings;
  const Dataset wide = reshape_long_to_wide(d, map, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_TRUE(wide.is_missing(1, wide.index_of("y.5")));
}

TEST(Reshape, DuplicateTimePointIsRejected) {
  try {
    make_dataset({ColumnSpec::continuous("id", Role::UnitId), ColumnSpec::continuous("time", Role::Time),
                  ColumnSpec::continuous("y")},
                 {{1, 1}, {3, 3}, {1, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateTimePoint);
  }
}

TEST(Reshape, BaselineColumnsRegistered) {
  Dataset d = make_dataset({ColumnSpec::continuous("id", Role::UnitId), ColumnSpec::continuous("scorew1"),
                            ColumnSpec::continuous("time", Role::Time), ColumnSpec::continuous("score")},
                           {{1, 1}, {0.5, 0.5}, {3, 5}, {1, 2}});
  const ReshapeMap map = infer_reshape_map(d);
  EXPECT_EQ(map.stubs, std::vector<std::string>{"score"});
  ASSERT_EQ(map.baseline_waves.count("scorew1"), 1u);
  EXPECT_EQ(map.baseline_waves.at("scorew1"), 1);
}

TEST(DummyExpand, IndicatorsMatchLevels) {
  Dataset d = make_dataset({ColumnSpec::categorical("ses", {"a", "b", "c"})}, {{0, 2, 1, 2}});
  const Dataset e = dummy_expand(d, "ses", true);
  EXPECT_EQ(e.column_names(), (std::vector<std::string>{"ses_b", "ses_c", "row_id"}));
  const std::vector<double> b{0, 0, 1, 0}, c{0, 1, 0, 1};
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(e.value(r, 0), b[r]);
    EXPECT_EQ(e.value(r, 1), c[r]);
  }
  EXPECT_EQ(dummy_expand(d, "ses", false).n_cols(), 4u);
}

TEST(DummyExpand, MissingCellRaises) {
  Dataset d = make_dataset({ColumnSpec::categorical("ses", {"a", "b"})}, {{0, NA}});
  try {
    dummy_expand(d, "ses", true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingInFactor);
  }
}

TEST(AvailableCase, KeepsCompleteRowsOnModelVariables) {
  Dataset d = make_dataset({ColumnSpec::continuous("a"), ColumnSpec::continuous("b"), ColumnSpec::continuous("c")},
                           {{1, NA, 3, 4}, {1, 2, NA, 4}, {NA, 2, 3, 4}});
  const Dataset kept = available_case_filter(d, {"a", "b"});
  ASSERT_EQ(kept.n_rows(), 2u);
  EXPECT_EQ(kept.value(0, 0), 1);
  EXPECT_EQ(kept.value(1, 0), 4);
}

TEST(ClusterAggregate, MeansOfObservedCells) {
  Dataset d = make_dataset({ColumnSpec::continuous("g", Role::ClusterId), ColumnSpec::continuous("x")},
                           {{1, 1, 2, 2}, {1, 3, NA, 5}});
  const Dataset a = cluster_aggregate(d, "g", {"x"});
  ASSERT_EQ(a.n_rows(), 2u);
  EXPECT_DOUBLE_EQ(a.value(0, a.index_of("x")), 2.0);
  EXPECT_DOUBLE_EQ(a.value(1, a.index_of("x")), 5.0);
}

TEST(Csv, RoundTripKeepsLabelsAndMissingCells) {
  Dataset d = make_dataset({ColumnSpec::continuous("id", Role::UnitId), ColumnSpec::categorical("ses", {"lo", "hi"}),
                            ColumnSpec::continuous("x")},
                           {{1, 2, 3}, {1, NA, 0}, {0.1, 2.5e-17, NA}});
  std::stringstream s;
  write_csv(s, d);
  EXPECT_NE(s.str().find("hi"), std::string::npos);
  const Dataset back = read_csv(s, Metadata::of(d));
  EXPECT_TRUE(back == d);
}

TEST(Csv, UnknownLevelIsRejected) {
  Dataset d = make_dataset({ColumnSpec::categorical("ses", {"lo", "hi"})}, {{0}});
  std::stringstream s("ses,row_id\nmid,1\n");
  try {
    read_csv(s, Metadata::of(d));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownLevel);
  }
}
