#include <gtest/gtest.h>

#include "longimp/error.hpp"
#include "longimp/methods.hpp"
#include "longimp/simulator.hpp"

using namespace longimp;

namespace {

const Dataset& small_study() {
  static const Dataset d = [] {
    SimConfig cfg;
    cfg.n_students = 150;
    cfg.n_schools = 10;
    cfg.seed = 99;
    return simulate(cfg).observed;
  }();
  return d;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST(Methods, CatalogNamesResolve) {
  EXPECT_EQ(method_catalog().size(), 12u);
  for (const auto& m : method_catalog()) EXPECT_EQ(method_from_name(m.name), m.id);
  EXPECT_EQ(method_from_name("FCS-3L"), MethodId::Fcs3l);
}

TEST(Methods, ThreeLevelJointModelIsUnsupported) {
  try {
    method_from_name("jm-3l");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedMethod);
    EXPECT_TRUE(contains(e.what(), "not available"));
  }
}

TEST(Methods, DefaultFormulaFollowsClustering) {
  EXPECT_TRUE(contains(default_formula(MethodId::Fcs1lWide), "(1 | id)"));
  EXPECT_TRUE(contains(default_formula(MethodId::Fcs3l), "(1 | school/id)"));
}

TEST(Methods, StudyLayoutSplitsVariables) {
  const StudyLayout s = study_layout(small_study());
  EXPECT_EQ(s.cluster, "school");
  EXPECT_EQ(s.unit, "id");
  EXPECT_EQ(s.time, "time");
  EXPECT_EQ(s.repeated_incomplete, (std::vector<std::string>{"prev_dep", "numeracy_score"}));
  EXPECT_EQ(s.repeated_complete, std::vector<std::string>{"prev_sdq"});
  EXPECT_EQ(s.fixed_incomplete, (std::vector<std::string>{"ses", "numeracy_scorew1"}));
  EXPECT_EQ(s.fixed_complete, (std::vector<std::string>{"age", "sex"}));
}

TEST(Methods, MovingWindowMatrixEqualsHandBuilt) {
  const PreparedData p = prepare_data(MethodId::Fcs1lWideMtw, small_study());
  const FcsSpec spec = fcs_spec_for(MethodId::Fcs1lWideMtw, p, ImputeOptions{});
  const auto names = p.data.column_names();
  // Hand-built: all ones off the diagonal, id and school excluded, then the
  // waves more than one step apart on (w1, 3, 5, 7) removed.
  PredictorMatrix pred2(names);
  for (const auto& r : names)
    for (const auto& c : names)
      if (r != c) pred2.set(r, c, 1);
  pred2.set_column("id", 0);
  pred2.set_column("school", 0);
  auto has = [](const std::string& name, char wave) { return name.find(wave) != std::string::npos; };
  for (const auto& c : names) {
    if (has(c, '5') || has(c, '7')) pred2.set("numeracy_scorew1", c, 0);
  }
  for (const char* r : {"prev_dep.3", "prev_sdq.3", "numeracy_score.3"})
    for (const auto& c : names)
      if (has(c, '7') && c != r) pred2.set(r, c, 0);
  for (const char* r : {"prev_dep.5", "prev_sdq.5", "numeracy_score.5"}) pred2.set(r, "numeracy_scorew1", 0);
  for (const char* r : {"prev_dep.7", "prev_sdq.7", "numeracy_score.7"}) {
    for (const auto& c : names)
      if (has(c, '3') && c != r) pred2.set(r, c, 0);
    pred2.set(r, "numeracy_scorew1", 0);
  }
  EXPECT_TRUE(spec.pred == pred2) << "codes\n" << spec.pred.codes() << "\nexpected\n" << pred2.codes();
}

TEST(Methods, WiderWindowOnlyDropsFarthestPair) {
  const PreparedData p = prepare_data(MethodId::Fcs1lWideMtw, small_study());
  ImputeOptions opt;
  opt.mtw_window = 2;
  const FcsSpec spec = fcs_spec_for(MethodId::Fcs1lWideMtw, p, opt);
  EXPECT_EQ(spec.pred.at("numeracy_scorew1", "prev_dep.7"), 0);
  EXPECT_EQ(spec.pred.at("numeracy_score.7", "numeracy_scorew1"), 0);
  EXPECT_EQ(spec.pred.at("numeracy_scorew1", "prev_dep.5"), 1);
  EXPECT_EQ(spec.pred.at("numeracy_score.3", "prev_dep.7"), 1);
}

TEST(Methods, TwoLevelLongSpecification) {
  const PreparedData p = prepare_data(MethodId::Fcs2l, small_study());
  const FcsSpec spec = fcs_spec_for(MethodId::Fcs2l, p, ImputeOptions{});
  EXPECT_EQ(spec.methods.at("prev_dep"), UniMethod::Latent2l);
  EXPECT_EQ(spec.methods.at("numeracy_score"), UniMethod::Pan2l);
  EXPECT_EQ(spec.methods.at("ses"), UniMethod::Only2lPmm);
  EXPECT_EQ(spec.methods.at("numeracy_scorew1"), UniMethod::Only2lNorm);
  EXPECT_EQ(spec.pred.at("numeracy_score", "id"), -2);
  EXPECT_EQ(spec.pred.at("numeracy_score", "school"), 0);
  EXPECT_EQ(spec.pred.at("numeracy_score", "time"), 2);
  EXPECT_EQ(spec.pred.at("numeracy_score", "prev_dep"), 3);
  EXPECT_EQ(spec.pred.at("ses", "time"), 0);
}

TEST(Methods, JointSpecifications) {
  const ImputeOptions opt;
  const JmSpec wide = jm_spec_for(MethodId::Jm1lWide, prepare_data(MethodId::Jm1lWide, small_study()), opt);
  EXPECT_TRUE(wide.cluster.empty());
  EXPECT_EQ(wide.y.size(), 8u);  // ses, baseline, 2 stubs x 3 waves
  EXPECT_EQ(wide.nbetween, 1000);
  const JmSpec two = jm_spec_for(MethodId::Jm2l, prepare_data(MethodId::Jm2l, small_study()), opt);
  EXPECT_EQ(two.cluster, "id");
  EXPECT_EQ(two.y2, (std::vector<std::string>{"ses", "numeracy_scorew1"}));
  EXPECT_EQ(two.z, std::vector<std::string>{"time"});
  EXPECT_EQ(two.nbetween, 100);
  const JmSpec school = jm_spec_for(MethodId::Jm2lWide, prepare_data(MethodId::Jm2lWide, small_study()), opt);
  EXPECT_EQ(school.cluster, "school");
  EXPECT_EQ(school.cov_mode, CovMode::ClusterSpecific);
}

TEST(Methods, IndicatorColumnsDropFirstCluster) {
  const PreparedData p = prepare_data(MethodId::Fcs1lDiWide, small_study());
  EXPECT_EQ(p.indicators.size(), 9u);
  EXPECT_TRUE(p.data.has_column("school"));
}

class EveryMethod : public ::testing::TestWithParam<MethodInfo> {};

TEST_P(EveryMethod, OutputAlignedAndObservedCellsPreserved) {
  const Dataset& d = small_study();
  const MethodInfo info = GetParam();
  for (int m : {1, 3}) {
    ImputeOptions opt;
    opt.m = m;
    opt.maxit = 2;
    opt.nburn = 20;
    opt.nbetween = 5;
    opt.seed = 3;
    const MethodRun run = run_method(info.id, d, opt);
    ASSERT_EQ(run.stack.m(), static_cast<std::size_t>(m));
    EXPECT_TRUE(run.stack.original == d);
    EXPECT_EQ(run.trace.has_value(), info.joint);
    EXPECT_EQ(run.stats.has_value(), !info.joint);
    for (const auto& imp : run.stack.imputations) {
      ASSERT_EQ(imp.columns(), d.columns());
      ASSERT_EQ(imp.n_rows(), d.n_rows());
      for (std::size_t c = 0; c < d.n_cols(); ++c)
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
          ASSERT_FALSE(imp.is_missing(r, c)) << info.name;
          if (!d.is_missing(r, c)) ASSERT_EQ(imp.value(r, c), d.value(r, c)) << info.name;
        }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Catalog, EveryMethod, ::testing::ValuesIn(method_catalog()),
                         [](const ::testing::TestParamInfo<MethodInfo>& i) {
                           std::string n;
                           for (char c : i.param.name) n += c == '-' ? '_' : c;
                           return n;
                         });

TEST(Methods, FixedSeedReproducesExactly) {
  ImputeOptions opt;
  opt.m = 2;
  opt.maxit = 2;
  opt.nburn = 10;
  opt.nbetween = 5;
  for (MethodId id : {MethodId::Fcs1lWide, MethodId::Jm2l, MethodId::Fcs3l}) {
    const MethodRun a = run_method(id, small_study(), opt), b = run_method(id, small_study(), opt);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_TRUE(a.stack.imputations[k] == b.stack.imputations[k]);
  }
}

TEST(Methods, IndicatorTwoLevelWarnsAboutConvergence) {
  ImputeOptions opt;
  opt.m = 1;
  opt.maxit = 1;
  const MethodRun run = run_method(MethodId::Fcs2lDi, small_study(), opt);
  ASSERT_FALSE(run.warnings.empty());
  EXPECT_TRUE(contains(run.warnings.front(), "converge"));
}
