#include "longimp/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"

namespace longimp {

namespace {

constexpr int kMaxIter = 100;
constexpr double kScoreTol = 1e-8;
constexpr double kLoglikTol = 1e-10;
constexpr double kSeparation = 30.0;

void require_full_rank(const Eigen::MatrixXd& x) {
  if (x.rows() <= x.cols()) {
    throw Error(ErrorKind::RankDeficient, "need more rows (" + std::to_string(x.rows()) +
                                              ") than columns (" + std::to_string(x.cols()) + ")");
  }
  if (static_cast<Eigen::Index>(independent_columns(x).size()) < x.cols()) {
    throw Error(ErrorKind::RankDeficient, "design matrix is not of full column rank");
  }
}

double log1pexp(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
  return ll;
}

void check_separation(const Eigen::VectorXd& beta) {
  if (beta.cwiseAbs().maxCoeff() > kSeparation) {
    throw Error(ErrorKind::PerfectSeparation, "coefficients diverge (|beta| > 30)");
  }
}

}  // namespace

std::vector<Eigen::Index> independent_columns(const Eigen::MatrixXd& x) {
  if (x.cols() == 0) return {};
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-9);
  const Eigen::Index rank = qr.rank();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()[k]);
  std::sort(keep.begin(), keep.end());
  return keep;
}

LinearDraw fit_linear_and_draw(RngStream& rng, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               std::vector<std::string>* warnings) {
  require_full_rank(x);
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  LinearDraw out;
  Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "X'X is singular");
  out.beta_hat = llt.solve(x.transpose() * y);
  out.xtx_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const double rss = (y - x * out.beta_hat).squaredNorm();
  const double dof = static_cast<double>(n - p);
  out.s2 = rss / dof;
  double s2 = out.s2;
  if (!(s2 > kSigmaFloor)) {
    s2 = kSigmaFloor;
    out.floored = true;
    if (warnings) warnings->push_back("residual variance is zero; floored at 1e-10");
  }
  out.sigma2_draw = dof * s2 / rng.chi_squared(dof);
  out.beta_draw = mvn_draw_with_factor(rng, out.beta_hat,
                                       std::sqrt(out.sigma2_draw) * cholesky_lower(out.xtx_inv));
  return out;
}

GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  require_full_rank(x);
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  GlmFit fit;
  fit.beta_hat = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double ll = logistic_loglik(eta, y);
  Eigen::MatrixXd info(p, p);
  for (int it = 1; it <= kMaxIter; ++it) {
    fit.iterations = it;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = expit(eta[i]);
      w[i] = mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd score = x.transpose() * (y - mu);
    info = x.transpose() * w.asDiagonal() * x;
    if (score.cwiseAbs().maxCoeff() < kScoreTol) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) throw Error(ErrorKind::SingularFit, "information matrix is singular");
    Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    Eigen::VectorXd beta_new;
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 30; ++h, scale *= 0.5) {
      beta_new = fit.beta_hat + scale * step;
      eta = x * beta_new;
      ll_new = logistic_loglik(eta, y);
      if (ll_new >= ll) break;
    }
    if (ll_new < ll) {
      // No ascent direction left at machine precision.
      eta = x * fit.beta_hat;
      fit.converged = true;
      break;
    }
    fit.beta_hat = beta_new;
    check_separation(fit.beta_hat);
    const double change = std::abs(ll_new - ll) / (std::abs(ll) + 1e-300);
    ll = ll_new;
    if (change < kLoglikTol) {
      fit.converged = true;
      Eigen::VectorXd w2(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = expit(eta[i]);
        w2[i] = m * (1.0 - m);
      }
      info = x.transpose() * w2.asDiagonal() * x;
      break;
    }
  }
  // Complete separation: all fitted probabilities numerically 0 or 1.
  bool all_saturated = true;
  for (Eigen::Index i = 0; i < n && all_saturated; ++i) {
    const double m = expit(eta[i]);
    all_saturated = m * (1.0 - m) < 1e-8;
  }
  if (all_saturated) throw Error(ErrorKind::PerfectSeparation, "fitted probabilities are all 0 or 1");
  fit.loglik = ll;
  fit.cov_hat = spd_inverse(info);
  return fit;
}

std::vector<double> polr_probabilities(const Eigen::VectorXd& zeta, double eta) {
  const Eigen::Index k1 = zeta.size();
  std::vector<double> p(static_cast<std::size_t>(k1 + 1));
  double prev = 0.0;
  for (Eigen::Index k = 0; k < k1; ++k) {
    const double c = expit(zeta[k] - eta);
    p[static_cast<std::size_t>(k)] = std::max(c - prev, 0.0);
    prev = c;
  }
  p.back() = std::max(1.0 - prev, 0.0);
  return p;
}

namespace {

struct PolrEval {
  double loglik = 0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Logistic cdf pieces at a cutpoint distance; infinite ends contribute zero.
struct Edge {
  double cdf, dens, dens1;  // F, f, f'
};

Edge edge(double t) {
  if (t == std::numeric_limits<double>::infinity()) return {1.0, 0.0, 0.0};
  if (t == -std::numeric_limits<double>::infinity()) return {0.0, 0.0, 0.0};
  const double f = expit(t);
  const double d = f * (1.0 - f);
  return {f, d, d * (1.0 - 2.0 * f)};
}

PolrEval polr_eval(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, const Eigen::VectorXd& theta,
                   int k1, bool derivs) {
  const Eigen::Index n = x.rows();
  const Eigen::Index q = x.cols();
  const Eigen::Index dim = k1 + q;
  PolrEval out;
  if (derivs) {
    out.grad = Eigen::VectorXd::Zero(dim);
    out.hess = Eigen::MatrixXd::Zero(dim, dim);
  }
  const double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = q > 0 ? x.row(i).dot(theta.tail(q)) : 0.0;
    const int k = y[i];
    const double a = k < k1 ? theta[k] - eta : inf;
    const double b = k > 0 ? theta[k - 1] - eta : -inf;
    const Edge ea = edge(a), eb = edge(b);
    // Upper-tail form when both ends sit above the median avoids cancellation.
    double p = (b > 0) ? expit(-b) - expit(-a) : ea.cdf - eb.cdf;
    if (!(p > 1e-300)) p = 1e-300;
    out.loglik += std::log(p);
    if (!derivs) continue;
    const double da = ea.dens / p, db = eb.dens / p;
    const double d_eta = -(da - db);
    const double h_aa = ea.dens1 / p - da * da;
    const double h_bb = -eb.dens1 / p - db * db;
    const double h_ab = da * db;
    const double h_ee = (ea.dens1 - eb.dens1) / p - (da - db) * (da - db);
    const double h_ae = -ea.dens1 / p + da * (da - db);
    const double h_be = eb.dens1 / p - db * (da - db);
    if (k < k1) {
      out.grad[k] += da;
      out.hess(k, k) += h_aa;
    }
    if (k > 0) {
      out.grad[k - 1] -= db;
      out.hess(k - 1, k - 1) += h_bb;
    }
    if (k > 0 && k < k1) {
      out.hess(k, k - 1) += h_ab;
      out.hess(k - 1, k) += h_ab;
    }
    if (q == 0) continue;
    const Eigen::VectorXd xi = x.row(i).transpose();
    out.grad.tail(q) += d_eta * xi;
    out.hess.bottomRightCorner(q, q) += h_ee * xi * xi.transpose();
    if (k < k1) {
      out.hess.block(k, k1, 1, q) += h_ae * xi.transpose();
      out.hess.block(k1, k, q, 1) += h_ae * xi;
    }
    if (k > 0) {
      out.hess.block(k - 1, k1, 1, q) += h_be * xi.transpose();
      out.hess.block(k1, k - 1, q, 1) += h_be * xi;
    }
  }
  return out;
}

bool increasing(const Eigen::VectorXd& theta, int k1) {
  for (int k = 1; k < k1; ++k) {
    if (!(theta[k] > theta[k - 1])) return false;
  }
  return true;
}

}  // namespace

GlmFit fit_polr(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, int n_levels) {
  if (n_levels < 2) throw Error(ErrorKind::EmptyCategory, "polr needs at least two levels");
  const Eigen::Index n = y.size();
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(n_levels), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] < 0 || y[i] >= n_levels) throw Error(ErrorKind::UnknownLevel, "level index out of range");
    ++counts[static_cast<std::size_t>(y[i])];
  }
  for (int k = 0; k < n_levels; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw Error(ErrorKind::EmptyCategory, "level " + std::to_string(k) + " is never observed");
    }
  }
  if (x.cols() > 0) {
    Eigen::MatrixXd with_one(x.rows(), x.cols() + 1);
    with_one << Eigen::VectorXd::Ones(x.rows()), x;
    require_full_rank(with_one);
  }
  const int k1 = n_levels - 1;
  const Eigen::Index dim = k1 + x.cols();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  double cum = 0;
  for (int k = 0; k < k1; ++k) {
    cum += static_cast<double>(counts[static_cast<std::size_t>(k)]);
    theta[k] = logit(cum / static_cast<double>(n));
  }
  GlmFit fit;
  PolrEval cur = polr_eval(x, y, theta, k1, true);
  for (int it = 1; it <= kMaxIter; ++it) {
    fit.iterations = it;
    if (cur.grad.cwiseAbs().maxCoeff() < kScoreTol) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd neg = -cur.hess;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg);
    Eigen::VectorXd step;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      step = ldlt.solve(cur.grad);
    } else {
      step = cur.grad * 1e-2;
    }
    double scale = 1.0;
    Eigen::VectorXd next;
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int h = 0; h < 40; ++h, scale *= 0.5) {
      next = theta + scale * step;
      if (!increasing(next, k1)) continue;
      ll_new = polr_eval(x, y, next, k1, false).loglik;
      if (ll_new >= cur.loglik) break;
    }
    if (!(ll_new >= cur.loglik)) {
      fit.converged = true;
      break;
    }
    const double change = std::abs(ll_new - cur.loglik) / (std::abs(cur.loglik) + 1e-300);
    theta = next;
    if (x.cols() > 0) check_separation(theta.tail(x.cols()));
    cur = polr_eval(x, y, theta, k1, true);
    if (change < kLoglikTol) {
      fit.converged = true;
      break;
    }
  }
  if (!increasing(theta, k1)) throw Error(ErrorKind::NonMonotoneCutpoints, "cutpoints not increasing");
  fit.beta_hat = theta;
  fit.loglik = cur.loglik;
  fit.cov_hat = spd_inverse(-cur.hess);
  return fit;
}

}  // namespace longimp
