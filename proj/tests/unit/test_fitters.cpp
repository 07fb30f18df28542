#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "longimp/distributions.hpp"
#include "longimp/error.hpp"
#include "longimp/formula.hpp"
#include "longimp/lmm.hpp"
#include "longimp/lmm_gibbs.hpp"
#include "longimp/regression.hpp"

using namespace longimp;
using longimp::testing::make_dataset;
using longimp::testing::NA;

namespace {

// Balanced one-way layout: g groups of n, with group effects of sd tau.
Dataset one_way(std::mt19937_64& gen, int g, int n, double tau) {
  std::normal_distribution<double> z(0, 1);
  std::vector<double> grp, y;
  for (int i = 0; i < g; ++i) {
    const double b = tau * z(gen);
    for (int j = 0; j < n; ++j) {
      grp.push_back(i + 1);
      y.push_back(2.0 + b + z(gen));
    }
  }
  return make_dataset({ColumnSpec::continuous("g", Role::ClusterId), ColumnSpec::continuous("y")}, {grp, y});
}

Dataset three_level(std::mt19937_64& gen) {
  std::normal_distribution<double> z(0, 1);
  std::vector<double> s, id, x, y;
  int unit = 0;
  for (int school = 1; school <= 8; ++school) {
    const double bs = 0.7 * z(gen);
    for (int k = 0; k < 6; ++k) {
      ++unit;
      const double bu = 0.9 * z(gen);
      for (int t = 0; t < 3; ++t) {
        const double xv = z(gen);
        s.push_back(school);
        id.push_back(unit);
        x.push_back(xv);
        y.push_back(1.0 + 0.5 * xv + bs + bu + 0.6 * z(gen));
      }
    }
  }
  return make_dataset({ColumnSpec::continuous("school", Role::ClusterId), ColumnSpec::continuous("id", Role::UnitId),
                       ColumnSpec::continuous("x"), ColumnSpec::continuous("y")},
                      {s, id, x, y});
}

}  // namespace

TEST(Formula, ParsesFixedFactorAndNestedGroups) {
  const ModelFormula f = parse_formula("numeracy_score ~ prev_dep + time + factor(ses) + (1 | school/id)");
  EXPECT_EQ(f.response, "numeracy_score");
  ASSERT_EQ(f.fixed.size(), 3u);
  EXPECT_TRUE(f.fixed[2].factor);
  EXPECT_EQ(f.groups, (std::vector<std::string>{"school", "id"}));
  EXPECT_EQ(parse_formula(f.to_string()).to_string(), f.to_string());
}

TEST(Formula, ExplicitInterceptIsAccepted) {
  const ModelFormula f = parse_formula("y ~ 1 + (1 | g)");
  EXPECT_TRUE(f.fixed.empty());
  EXPECT_EQ(f.groups, std::vector<std::string>{"g"});
}

TEST(Formula, ParseFailureCarriesOffset) {
  try {
    parse_formula("y ~ a + + b");
    FAIL();
  } catch (const ParseFailure& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_EQ(e.offset(), 8u);
  }
  EXPECT_THROW(parse_formula("y ~ a + (x | g)"), ParseFailure);
}

TEST(Formula, UnknownColumnOnBind) {
  const Dataset d = make_dataset({ColumnSpec::continuous("y")}, {{1, 2}});
  try {
    parse_formula("y ~ z").bind(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownColumn);
  }
}

TEST(Formula, FactorDesignDropsFirstLevel) {
  const Dataset d = make_dataset({ColumnSpec::continuous("y"), ColumnSpec::categorical("c", {"a", "b", "c"})},
                                 {{1, 2, 3}, {0, 1, 2}});
  const Design des = build_design(parse_formula("y ~ factor(c)"), d);
  EXPECT_EQ(des.names, (std::vector<std::string>{"(Intercept)", "factor(c)b", "factor(c)c"}));
  EXPECT_EQ(des.x(1, 1), 1);
  EXPECT_EQ(des.x(2, 2), 1);
  EXPECT_EQ(des.x(0, 1) + des.x(0, 2), 0);
}

TEST(Lmm, BalancedOneWayRemlEqualsAnova) {
  std::mt19937_64 gen(21);
  const int g = 25, n = 6;
  const Dataset d = one_way(gen, g, n, 1.2);
  // ANOVA oracle.
  std::vector<double> means(g, 0.0);
  double grand = 0;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < n; ++j) means[i] += d.value(i * n + j, 1) / n;
    grand += means[i] / g;
  }
  double ssb = 0, ssw = 0;
  for (int i = 0; i < g; ++i) {
    ssb += n * (means[i] - grand) * (means[i] - grand);
    for (int j = 0; j < n; ++j) ssw += std::pow(d.value(i * n + j, 1) - means[i], 2);
  }
  const double msb = ssb / (g - 1), msw = ssw / (g * (n - 1));
  ASSERT_GT(msb, msw);
  const LmmFit fit = fit_lmm(parse_formula("y ~ 1 + (1 | g)"), d, Criterion::REML);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.components[0].variance, (msb - msw) / n, 1e-8);
  EXPECT_NEAR(fit.residual().variance, msw, 1e-8);
  EXPECT_NEAR(fit.beta[0], grand, 1e-8);
  EXPECT_NEAR(fit.se[0], std::sqrt(msb / (g * n)), 1e-8);
}

TEST(Lmm, NegativeAnovaEstimateGivesBoundary) {
  std::mt19937_64 gen(4);
  Dataset d = one_way(gen, 30, 4, 0.0);
  const LmmFit fit = fit_lmm(parse_formula("y ~ 1 + (1 | g)"), d, Criterion::REML);
  // With tau = 0 the REML optimum is on the boundary or tiny.
  if (fit.components[0].boundary) EXPECT_EQ(fit.components[0].variance, 0.0);
  EXPECT_LT(fit.components[0].variance, 0.2);
}

TEST(Lmm, ThreeLevelFitBeatsDevianceGrid) {
  std::mt19937_64 gen(8);
  const Dataset d = three_level(gen);
  const ModelFormula f = parse_formula("y ~ x + (1 | school/id)");
  for (Criterion crit : {Criterion::REML, Criterion::ML}) {
    const LmmFit fit = fit_lmm(f, d, crit);
    ASSERT_TRUE(fit.converged);
    ASSERT_EQ(fit.components.size(), 3u);
    const std::vector<double> est{fit.components[0].variance, fit.components[1].variance, fit.residual().variance};
    EXPECT_NEAR(lmm_deviance_at(f, d, crit, est), fit.deviance, 1e-6);
    double best = INFINITY;
    for (int a = 0; a < 20; ++a)
      for (int b = 0; b < 20; ++b)
        for (int c = 0; c < 20; ++c) {
          const std::vector<double> v{est[0] * (0.2 + 0.1 * a), est[1] * (0.2 + 0.1 * b), est[2] * (0.2 + 0.1 * c)};
          best = std::min(best, lmm_deviance_at(f, d, crit, v));
        }
    EXPECT_LE(fit.deviance, best + 1e-8);
  }
}

TEST(Lmm, FitJsonRoundTrip) {
  std::mt19937_64 gen(2);
  const Dataset d = one_way(gen, 10, 4, 1.0);
  const LmmFit fit = fit_lmm(parse_formula("y ~ 1 + (1 | g)"), d);
  const LmmFit back = lmm_fit_from_json(to_json(fit));
  EXPECT_EQ(back.names, fit.names);
  EXPECT_EQ(back.beta, fit.beta);
  EXPECT_EQ(back.se, fit.se);
  EXPECT_EQ(back.components.size(), fit.components.size());
}

TEST(Logistic, SaturatedModelMatchesLogOdds) {
  // Group 0: 30 of 100 events; group 1: 70 of 120 events.
  const int n0 = 100, e0 = 30, n1 = 120, e1 = 70;
  Eigen::MatrixXd x(n0 + n1, 2);
  Eigen::VectorXd y(n0 + n1);
  for (int i = 0; i < n0 + n1; ++i) {
    const bool g1 = i >= n0;
    x(i, 0) = 1;
    x(i, 1) = g1;
    y[i] = g1 ? (i - n0 < e1) : (i < e0);
  }
  const GlmFit fit = fit_logistic(x, y);
  EXPECT_TRUE(fit.converged);
  const double lo0 = std::log(0.3 / 0.7), lo1 = std::log(70.0 / 50.0);
  EXPECT_NEAR(fit.beta_hat[0], lo0, 1e-6);
  EXPECT_NEAR(fit.beta_hat[1], lo1 - lo0, 1e-6);
  // Variance of a log-odds: 1/events + 1/non-events.
  EXPECT_NEAR(fit.cov_hat(0, 0), 1.0 / 30 + 1.0 / 70, 1e-6);
}

TEST(Logistic, SeparationIsReported) {
  Eigen::MatrixXd x(6, 2);
  x << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  try {
    fit_logistic(x, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PerfectSeparation);
  }
}

TEST(Polr, TwoLevelsMatchLogistic) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 300;
  Eigen::MatrixXd x1(n, 2), x(n, 2);
  Eigen::VectorXd yl(n);
  Eigen::VectorXi yk(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = z(gen);
    x(i, 1) = u(gen) < 0.4;
    x1(i, 0) = 1;
    x1.row(i).tail(1) = x.row(i).head(1);
    const bool event = u(gen) < expit(0.3 + 0.8 * x(i, 0) - 0.5 * x(i, 1));
    yl[i] = event;
    yk[i] = event ? 1 : 0;
  }
  Eigen::MatrixXd xl(n, 3);
  xl << Eigen::VectorXd::Ones(n), x;
  const GlmFit lr = fit_logistic(xl, yl);
  const GlmFit po = fit_polr(x, yk, 2);
  // logit P(Y = 0) = zeta - x'b  <=>  logit P(Y = 1) = -zeta + x'b.
  EXPECT_NEAR(po.beta_hat[0], -lr.beta_hat[0], 1e-6);
  EXPECT_NEAR(po.beta_hat[1], lr.beta_hat[1], 1e-6);
  EXPECT_NEAR(po.beta_hat[2], lr.beta_hat[2], 1e-6);
}

TEST(Polr, CutpointsIncreaseAndProbabilitiesSumToOne) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(0, 1);
  const int n = 400;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = z(gen);
    const double latent = 0.7 * x(i, 0) + std::log(1 / (1 / std::generate_canonical<double, 53>(gen) - 1));
    y[i] = latent < -1 ? 0 : latent < 0.5 ? 1 : latent < 1.5 ? 2 : 3;
  }
  const GlmFit fit = fit_polr(x, y, 4);
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.beta_hat[0], fit.beta_hat[1]);
  EXPECT_LT(fit.beta_hat[1], fit.beta_hat[2]);
  EXPECT_NEAR(fit.beta_hat[3], 0.7, 0.25);
  const auto p = polr_probabilities(fit.beta_hat.head(3), 0.3);
  double sum = 0;
  for (double v : p) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Polr, EmptyCategoryRaises) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 1);
  Eigen::VectorXi y = Eigen::VectorXi::Zero(10);
  y[3] = 2;
  try {
    fit_polr(x, y, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCategory);
  }
}

TEST(LinearDraw, BetaHatSolvesNormalEquations) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> z(0, 1);
  Eigen::MatrixXd x(50, 3);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) {
    x(i, 0) = 1;
    x(i, 1) = z(gen);
    x(i, 2) = z(gen);
    y[i] = 1 + 2 * x(i, 1) - x(i, 2) + 0.3 * z(gen);
  }
  RngStream rng(1);
  const LinearDraw dr = fit_linear_and_draw(rng, x, y);
  const Eigen::VectorXd oracle = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  EXPECT_LT((dr.beta_hat - oracle).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(dr.s2, (y - x * oracle).squaredNorm() / 47, 1e-10);
}

TEST(LinearDraw, CollinearDesignRaises) {
  Eigen::MatrixXd x(5, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
  RngStream rng(1);
  try {
    fit_linear_and_draw(rng, x, Eigen::VectorXd::Ones(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
  EXPECT_EQ(independent_columns(x).size(), 2u);
}

TEST(LmmGibbs, PosteriorMeansNearRemlEstimates) {
  std::mt19937_64 gen(31);
  const Dataset d = one_way(gen, 40, 8, 1.0);
  const LmmFit reml = fit_lmm(parse_formula("y ~ 1 + (1 | g)"), d);
  GibbsDesign des;
  des.x = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d.n_rows()), 1);
  RandomLevel lev;
  lev.n_groups = 40;
  lev.z = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d.n_rows()), 1);
  for (std::size_t r = 0; r < d.n_rows(); ++r) lev.group.push_back(static_cast<int>(r / 8));
  des.levels.push_back(lev);
  Eigen::VectorXd y(static_cast<Eigen::Index>(d.n_rows()));
  for (std::size_t r = 0; r < d.n_rows(); ++r) y[static_cast<Eigen::Index>(r)] = d.value(r, 1);
  std::vector<std::uint8_t> use(d.n_rows(), 1);
  LmmGibbs s(false);
  RngStream rng(3);
  double b0 = 0, s2 = 0;
  const int burn = 200, keep = 2000;
  for (int it = 0; it < burn + keep; ++it) {
    s.sweep(rng, des, y, use);
    if (it >= burn) {
      b0 += s.beta()[0] / keep;
      s2 += s.residual_variance() / keep;
    }
  }
  EXPECT_NEAR(b0, reml.beta[0], 3 * reml.se[0]);
  EXPECT_NEAR(s2, reml.residual().variance, 0.15 * reml.residual().variance);
}
