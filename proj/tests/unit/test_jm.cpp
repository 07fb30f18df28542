#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "longimp/error.hpp"
#include "longimp/jm.hpp"
#include "longimp/tabular.hpp"

using namespace longimp;
using longimp::testing::make_dataset;
using longimp::testing::NA;

namespace {

Dataset bivariate(std::mt19937_64& gen, int n, double rho) {
  std::normal_distribution<double> z(0, 1);
  std::vector<double> y1, y2;
  for (int i = 0; i < n; ++i) {
    const double a = z(gen);
    y1.push_back(1 + a);
    y2.push_back(-0.5 + 2 * (rho * a + std::sqrt(1 - rho * rho) * z(gen)));
  }
  return make_dataset({ColumnSpec::continuous("y1"), ColumnSpec::continuous("y2")}, {y1, y2});
}

// Clustered data: cluster id, row-level continuous y and binary b, and a
// cluster-level continuous w, with missing cells.
Dataset clustered(std::mt19937_64& gen, int clusters, int per) {
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> c, x, y, b, w;
  for (int k = 0; k < clusters; ++k) {
    const double re = z(gen), wv = z(gen) + re;
    const bool w_na = u(gen) < 0.2;
    for (int j = 0; j < per; ++j) {
      const double xv = z(gen);
      c.push_back(k + 1);
      x.push_back(xv);
      y.push_back(u(gen) < 0.2 ? NA : re + 0.5 * xv + z(gen));
      b.push_back(u(gen) < 0.2 ? NA : (re + z(gen) > 0 ? 1 : 0));
      w.push_back(w_na ? NA : wv);
    }
  }
  return make_dataset({ColumnSpec::continuous("cl", Role::ClusterId), ColumnSpec::continuous("x"),
                       ColumnSpec::continuous("y"), ColumnSpec::binary("b"), ColumnSpec::continuous("w")},
                      {c, x, y, b, w});
}

void expect_observed_preserved(const Dataset& original, const Dataset& completed) {
  ASSERT_EQ(original.n_rows(), completed.n_rows());
  for (std::size_t c = 0; c < original.n_cols(); ++c)
    for (std::size_t r = 0; r < original.n_rows(); ++r) {
      if (original.is_missing(r, c)) {
        ASSERT_FALSE(completed.is_missing(r, c));
      } else {
        ASSERT_EQ(original.value(r, c), completed.value(r, c));
      }
    }
}

}  // namespace

TEST(Jm, SingleMissingCellPosteriorMeanMatchesConditional) {
  std::mt19937_64 gen(17);
  Dataset d = bivariate(gen, 400, 0.6);
  const std::size_t target = 0;
  const double y1_target = d.value(target, 0);
  std::vector<double> y2(d.values(1).begin(), d.values(1).end());
  y2[target] = NA;
  Mask m(d.n_rows(), 0);
  m[target] = 1;
  d = d.with_column(1, y2, m);

  // Oracle: least-squares regression of y2 on y1 over the complete rows.
  double s1 = 0, s2 = 0, s11 = 0, s12 = 0;
  const double n = static_cast<double>(d.n_rows() - 1);
  for (std::size_t r = 1; r < d.n_rows(); ++r) {
    s1 += d.value(r, 0);
    s2 += d.value(r, 1);
  }
  const double m1 = s1 / n, m2 = s2 / n;
  for (std::size_t r = 1; r < d.n_rows(); ++r) {
    s11 += std::pow(d.value(r, 0) - m1, 2);
    s12 += (d.value(r, 0) - m1) * (d.value(r, 1) - m2);
  }
  const double oracle = m2 + s12 / s11 * (y1_target - m1);

  JmSpec spec;
  spec.y = {"y1", "y2"};
  RngStream rng(5);
  JmSampler sampler(rng, spec, d);
  const int burn = 200, keep = 8000, batch = 200;
  std::vector<double> batch_means;
  double sum = 0, acc = 0;
  for (int it = 0; it < burn + keep; ++it) {
    sampler.sweep(rng);
    if (it < burn) continue;
    const double v = sampler.completed().value(target, 1);
    sum += v;
    acc += v;
    if ((it - burn + 1) % batch == 0) {
      batch_means.push_back(acc / batch);
      acc = 0;
    }
  }
  const double mean = sum / keep;
  double var = 0;
  for (double b : batch_means) var += (b - mean) * (b - mean);
  var /= static_cast<double>(batch_means.size() - 1);
  const double mcse = std::sqrt(var / static_cast<double>(batch_means.size()));
  EXPECT_NEAR(mean, oracle, 3 * mcse) << "mcse " << mcse;
}

TEST(Jm, SnapshotArithmetic) {
  std::mt19937_64 gen(1);
  Dataset d = bivariate(gen, 50, 0.3);
  std::vector<double> y2(d.values(1).begin(), d.values(1).end());
  y2[3] = NA;
  d = d.with_column(1, y2, {});
  JmSpec spec;
  spec.y = {"y1", "y2"};
  spec.nimp = 2;
  spec.nburn = 3;
  spec.nbetween = 2;
  RngStream rng(2);
  const JmResult r = run_jm(rng, spec, d);
  EXPECT_EQ(r.trace.iterations(), 5u);
  ASSERT_EQ(r.stack.m(), 2u);
  EXPECT_TRUE(r.stack.original == d);

  // Replaying the sampler gives the snapshots at sweeps 3 and 5.
  RngStream replay(2);
  JmSampler s(replay, spec, d);
  std::vector<Dataset> snaps;
  for (int it = 1; it <= 5; ++it) {
    s.sweep(replay);
    if (it == 3 || it == 5) snaps.push_back(s.completed());
  }
  EXPECT_TRUE(snaps[0] == r.stack.imputations[0]);
  EXPECT_TRUE(snaps[1] == r.stack.imputations[1]);
}

TEST(Jm, ClusteredRunPreservesObservedAndKeepsLevelTwoConstant) {
  std::mt19937_64 gen(3);
  const Dataset d = clustered(gen, 15, 6);
  for (CovMode mode : {CovMode::Common, CovMode::ClusterSpecific}) {
    JmSpec spec;
    spec.y = {"y", "b"};
    spec.y2 = {"w"};
    spec.x = {"x"};
    spec.cluster = "cl";
    spec.cov_mode = mode;
    spec.nburn = 50;
    spec.nbetween = 20;
    spec.nimp = 3;
    RngStream rng(9);
    const JmResult r = run_jm(rng, spec, d);
    ASSERT_EQ(r.stack.m(), 3u);
    for (const auto& imp : r.stack.imputations) {
      expect_observed_preserved(d, imp);
      const auto b = imp.index_of("b"), w = imp.index_of("w");
      for (std::size_t row = 0; row < imp.n_rows(); ++row) {
        EXPECT_TRUE(imp.value(row, b) == 0 || imp.value(row, b) == 1);
        if (row % 6) EXPECT_EQ(imp.value(row, w), imp.value(row - 1, w));
      }
    }
  }
}

TEST(Jm, DeterministicUnderSeed) {
  std::mt19937_64 gen(4);
  const Dataset d = clustered(gen, 10, 5);
  JmSpec spec;
  spec.y = {"y", "b"};
  spec.x = {"x"};
  spec.cluster = "cl";
  spec.nburn = 20;
  spec.nbetween = 10;
  spec.nimp = 2;
  RngStream a(1), b(1);
  const JmResult ra = run_jm(a, spec, d), rb = run_jm(b, spec, d);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_TRUE(ra.stack.imputations[k] == rb.stack.imputations[k]);
}

TEST(Jm, TooFewClustersForClusterSpecificCovariance) {
  std::mt19937_64 gen(5);
  const Dataset d = clustered(gen, 2, 10);
  JmSpec spec;
  spec.y = {"y"};
  spec.cluster = "cl";
  spec.cov_mode = CovMode::ClusterSpecific;
  try {
    spec.validate(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewClusters);
  }
}

TEST(Jm, IncompletePredictorRejected) {
  std::mt19937_64 gen(6);
  const Dataset d = clustered(gen, 5, 4);
  JmSpec spec;
  spec.y = {"b"};
  spec.x = {"y"};
  spec.cluster = "cl";
  EXPECT_THROW(spec.validate(d), Error);
}

TEST(Jm, CovModeNames) {
  EXPECT_EQ(cov_mode_from_string("random"), CovMode::ClusterSpecific);
  EXPECT_EQ(cov_mode_from_string("common"), CovMode::Common);
  EXPECT_THROW(cov_mode_from_string("diagonal"), Error);
}
