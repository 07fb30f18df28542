#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"
#include "longimp/latent.hpp"
#include "longimp/rng.hpp"

using namespace longimp;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& gen, int p) {
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = z(gen);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(p, p);
}

// Upper-tail normal mean, by the inverse Mills ratio.
double upper_tail_mean(double a) {
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2 * std::numbers::pi);
  return pdf / (0.5 * std::erfc(a / std::numbers::sqrt2));
}

}  // namespace

TEST(Rng, SameSeedAndStreamReproduce) {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitIsDeterministicAndDistinct) {
  RngStream base(7);
  RngStream s1 = base.split(1), s1b = base.split(1), s2 = base.split(2);
  const double u = s1.uniform();
  EXPECT_EQ(u, s1b.uniform());
  EXPECT_NE(u, s2.uniform());
}

TEST(ConditionalMvn, MatchesPartitionedInverseOracle) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z(0, 1);
  for (int rep = 0; rep < 100; ++rep) {
    const int p = 3 + rep % 3;
    MvnParams par{Eigen::VectorXd::NullaryExpr(p, [&] { return z(gen); }), random_spd(gen, p)};
    std::vector<int> obs, mis;
    for (int i = 0; i < p; ++i) ((i + rep) % 2 ? obs : mis).push_back(i);
    Eigen::VectorXd xo(static_cast<Eigen::Index>(obs.size()));
    for (auto& v : xo) v = z(gen);

    // Oracle: blocks of the precision matrix.
    const Eigen::MatrixXd q = par.cov.inverse();
    const auto nm = static_cast<Eigen::Index>(mis.size()), no = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd quu(nm, nm), quo(nm, no);
    Eigen::VectorXd mu_u(nm), dev(no);
    for (Eigen::Index i = 0; i < nm; ++i) {
      mu_u[i] = par.mean[mis[i]];
      for (Eigen::Index j = 0; j < nm; ++j) quu(i, j) = q(mis[i], mis[j]);
      for (Eigen::Index j = 0; j < no; ++j) quo(i, j) = q(mis[i], obs[j]);
    }
    for (Eigen::Index j = 0; j < no; ++j) dev[j] = xo[j] - par.mean[obs[j]];
    const Eigen::MatrixXd cov = quu.inverse();
    const Eigen::VectorXd mean = mu_u - cov * quo * dev;

    const MvnParams got = conditional_mvn(par, obs, xo);
    ASSERT_EQ(got.mean.size(), nm);
    EXPECT_LT((got.mean - mean).cwiseAbs().maxCoeff(), 1e-10) << rep;
    EXPECT_LT((got.cov - cov).cwiseAbs().maxCoeff(), 1e-10) << rep;
  }
}

TEST(ConditionalMvn, NonSpdObservedBlockRaises) {
  MvnParams par{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  par.cov(0, 0) = -1;
  const std::vector<int> obs{0};
  try {
    conditional_mvn(par, obs, Eigen::VectorXd::Zero(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularObservedBlock);
  }
}

TEST(MvnDraw, EmpiricalMomentsMatch) {
  RngStream rng(9);
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  MvnParams par{Eigen::Vector2d(1, -1), cov};
  const int n = 40000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sq = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = mvn_draw(rng, par);
    sum += x;
    sq += (x - par.mean) * (x - par.mean).transpose();
  }
  EXPECT_LT((sum / n - par.mean).cwiseAbs().maxCoeff(), 0.03);
  EXPECT_LT((sq / n - cov).cwiseAbs().maxCoeff(), 0.06);
}

TEST(Wishart, EmpiricalMeanIsDofTimesScale) {
  RngStream rng(3);
  std::mt19937_64 gen(1);
  const Eigen::MatrixXd s = random_spd(gen, 3);
  const double dof = 7;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += wishart_draw(rng, s, dof);
  const Eigen::MatrixXd expected = dof * s;
  EXPECT_LT(((sum / n) - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff(), 0.03);
}

TEST(InverseWishart, EmpiricalMeanWithinFivePercent) {
  RngStream rng(4);
  std::mt19937_64 gen(2);
  const Eigen::MatrixXd s = random_spd(gen, 3);
  const double dof = 10;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += inv_wishart_draw(rng, s, dof);
  const Eigen::MatrixXd expected = s / (dof - 3 - 1);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(sum(i, i) / n, expected(i, i), 0.05 * expected(i, i));
}

TEST(InverseWishart, DofTooSmallRaises) {
  RngStream rng(1);
  try {
    inv_wishart_draw(rng, Eigen::MatrixXd::Identity(3, 3), 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidDof);
  }
}

TEST(TruncNormal, HalfNormalMean) {
  RngStream rng(8);
  const int n = 100000;
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double x = trunc_normal_draw(rng, 0, 1, 0, INFINITY);
    ASSERT_GT(x, 0);
    sum += x;
  }
  EXPECT_NEAR(sum / n, std::sqrt(2 / std::numbers::pi), 0.01);
}

TEST(TruncNormal, FarTailMeanMatchesMillsRatio) {
  RngStream rng(12);
  const int n = 50000;
  for (double a : {1.0, 5.0, 9.0}) {
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      const double x = trunc_normal_draw(rng, 0, 1, a, INFINITY);
      ASSERT_GT(x, a);
      sum += x;
    }
    EXPECT_NEAR(sum / n, upper_tail_mean(a), 0.01) << a;
  }
}

TEST(TruncNormal, EmptyIntervalRaises) {
  RngStream rng(1);
  try {
    trunc_normal_draw(rng, 0, 1, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInterval);
  }
}

TEST(NormalCdf, QuantileInverts) {
  for (double p : {1e-8, 0.025, 0.5, 0.9, 1 - 1e-6}) EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
}

TEST(Latent, BinaryAndCategoricalRegions) {
  const std::vector<double> pos{0.3}, neg{-0.2};
  EXPECT_EQ(decode_latent(pos), 0);
  EXPECT_EQ(decode_latent(neg), 1);
  const std::vector<double> z{-1.0, 0.5, 0.2};
  EXPECT_EQ(decode_latent(z), 1);
  const std::vector<double> ref{-1.0, -0.5, -0.2};
  EXPECT_EQ(decode_latent(ref), 3);
}

TEST(Latent, SampledVectorsLieInTheirRegion) {
  RngStream rng(2);
  for (int level = 0; level < 4; ++level) {
    for (int i = 0; i < 50; ++i) {
      const auto z = sample_latent(rng, level, 4);
      EXPECT_EQ(decode_latent(z), level);
    }
  }
}

TEST(Latent, IntervalKeepsLevel) {
  const std::vector<double> z{0.8, 0.2};  // level 0
  const Interval iv = latent_interval(0, z, 0);
  EXPECT_DOUBLE_EQ(iv.lower, 0.2);
  EXPECT_TRUE(std::isinf(iv.upper));
  const Interval other = latent_interval(0, z, 1);
  EXPECT_DOUBLE_EQ(other.upper, 0.8);
}

TEST(AdaptiveRound, ThresholdFormula) {
  const double w = 0.3;
  EXPECT_NEAR(adaptive_threshold(w), w - normal_quantile(w) * std::sqrt(w * (1 - w)), 1e-15);
  const std::vector<double> completed{0, 1, 0.9, 0.1, 0.2, 0.6};
  const std::vector<std::uint8_t> imputed{0, 0, 1, 1, 1, 1};
  const auto r = adaptive_round(completed, imputed);
  const double c = adaptive_threshold((0 + 1 + 0.9 + 0.1 + 0.2 + 0.6) / 6);
  for (std::size_t i = 2; i < completed.size(); ++i) EXPECT_EQ(r[i], completed[i] > c ? 1.0 : 0.0);
  EXPECT_EQ(r[0], 0);
  EXPECT_EQ(r[1], 1);
}
