#include "longimp/distributions.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "longimp/error.hpp"

namespace longimp {

namespace {

constexpr double kTailSwitch = 4.0;

// Draw from N(0,1) restricted to [a, b] with a > 0 far in the upper tail.
double upper_tail_draw(RngStream& rng, double a, double b) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  if (std::isfinite(b) && (b - a) < 1.0 / alpha) {
    // Narrow window: uniform proposal with the normal kernel as acceptance.
    for (;;) {
      double z = a + (b - a) * rng.uniform();
      if (rng.uniform() <= std::exp(0.5 * (a * a - z * z))) return z;
    }
  }
  for (;;) {
    double z = a + rng.exponential(alpha);
    if (z > b) continue;
    double d = z - alpha;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
  }
}

}  // namespace

double normal_cdf(double x) {
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static const boost::math::normal_distribution<double> standard(0.0, 1.0);
  return boost::math::quantile(standard, p);
}

double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& spd) {
  Eigen::LLT<Eigen::MatrixXd> llt(spd);
  if (llt.info() != Eigen::Success || !spd.allFinite()) {
    throw Error(ErrorKind::NotPositiveDefinite, "Cholesky factorization failed");
  }
  return llt.matrixL();
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& spd) {
  Eigen::LLT<Eigen::MatrixXd> llt(spd);
  if (llt.info() != Eigen::Success || !spd.allFinite()) {
    throw Error(ErrorKind::NotPositiveDefinite, "matrix is not positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(spd.rows(), spd.cols()));
  return 0.5 * (inv + inv.transpose());
}

void MvnParams::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw Error(ErrorKind::NotPositiveDefinite, "covariance dimension mismatch");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error(ErrorKind::NotPositiveDefinite, "covariance is not symmetric");
  }
  if (!is_spd(cov)) throw Error(ErrorKind::NotPositiveDefinite, "Cholesky factorization failed");
}

Eigen::VectorXd standard_normal_vector(RngStream& rng, Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

Eigen::VectorXd mvn_draw_with_factor(RngStream& rng, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& lower) {
  Eigen::VectorXd z = standard_normal_vector(rng, mean.size());
  return mean + lower.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd mvn_draw(RngStream& rng, const MvnParams& params) {
  params.validate();
  return mvn_draw_with_factor(rng, params.mean, cholesky_lower(params.cov));
}

MvnParams conditional_mvn(const MvnParams& params, std::span<const int> observed_idx,
                          const Eigen::VectorXd& observed_vals) {
  const Eigen::Index p = params.mean.size();
  if (observed_idx.empty() || static_cast<Eigen::Index>(observed_idx.size()) >= p) {
    throw Error(ErrorKind::SingularObservedBlock, "observed index set must be a proper nonempty subset");
  }
  std::vector<bool> is_obs(static_cast<std::size_t>(p), false);
  for (int i : observed_idx) {
    if (i < 0 || i >= p || is_obs[static_cast<std::size_t>(i)]) {
      throw Error(ErrorKind::SingularObservedBlock, "invalid observed index");
    }
    is_obs[static_cast<std::size_t>(i)] = true;
  }
  std::vector<int> mis;
  for (int i = 0; i < p; ++i) {
    if (!is_obs[static_cast<std::size_t>(i)]) mis.push_back(i);
  }
  const auto no = static_cast<Eigen::Index>(observed_idx.size());
  const auto nm = static_cast<Eigen::Index>(mis.size());
  Eigen::MatrixXd soo(no, no), smo(nm, no), smm(nm, nm);
  Eigen::VectorXd mo(no), mm(nm);
  for (Eigen::Index a = 0; a < no; ++a) {
    mo[a] = params.mean[observed_idx[a]];
    for (Eigen::Index b = 0; b < no; ++b) soo(a, b) = params.cov(observed_idx[a], observed_idx[b]);
  }
  for (Eigen::Index a = 0; a < nm; ++a) {
    mm[a] = params.mean[mis[a]];
    for (Eigen::Index b = 0; b < no; ++b) smo(a, b) = params.cov(mis[a], observed_idx[b]);
    for (Eigen::Index b = 0; b < nm; ++b) smm(a, b) = params.cov(mis[a], mis[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(soo);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularObservedBlock, "observed covariance block is singular");
  }
  Eigen::MatrixXd gain = llt.solve(smo.transpose()).transpose();  // Smo Soo^-1
  MvnParams out;
  out.mean = mm + gain * (observed_vals - mo);
  out.cov = smm - gain * smo.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

Eigen::MatrixXd wishart_draw(RngStream& rng, const Eigen::MatrixXd& scale, double dof) {
  const Eigen::Index p = scale.rows();
  if (!(dof > static_cast<double>(p) - 1.0)) {
    throw Error(ErrorKind::InvalidDof, "Wishart degrees of freedom must exceed p - 1");
  }
  Eigen::MatrixXd lower = cholesky_lower(scale);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(dof - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  Eigen::MatrixXd la = lower * a;
  Eigen::MatrixXd w = la * la.transpose();
  return 0.5 * (w + w.transpose());
}

Eigen::MatrixXd inv_wishart_draw(RngStream& rng, const Eigen::MatrixXd& scale, double dof) {
  const Eigen::Index p = scale.rows();
  if (!(dof > static_cast<double>(p) - 1.0)) {
    throw Error(ErrorKind::InvalidDof, "inverse-Wishart degrees of freedom must exceed p - 1");
  }
  Eigen::MatrixXd w = wishart_draw(rng, spd_inverse(scale), dof);
  return spd_inverse(w);
}

double trunc_normal_draw(RngStream& rng, double mean, double sd, double lower, double upper) {
  if (!(lower < upper)) throw Error(ErrorKind::EmptyInterval, "truncation interval is empty");
  if (!(sd > 0)) throw Error(ErrorKind::EmptyInterval, "standard deviation must be positive");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  double z = 0.0;
  if (a >= kTailSwitch) {
    z = upper_tail_draw(rng, a, b);
  } else if (b <= -kTailSwitch) {
    z = -upper_tail_draw(rng, -b, -a);
  } else if (a > 0.0) {
    // Work with upper-tail probabilities to keep precision near 1.
    const double qa = normal_cdf(-a);
    const double qb = normal_cdf(-b);
    z = -normal_quantile(qa - rng.uniform() * (qa - qb));
  } else {
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    z = normal_quantile(pa + rng.uniform() * (pb - pa));
  }
  // Guard against round-off landing on a bound.
  if (z <= a) z = std::nextafter(a, b);
  if (z >= b) z = std::nextafter(b, a);
  return mean + sd * z;
}

Eigen::MatrixXd matrix_normal_draw(RngStream& rng, const Eigen::MatrixXd& mean,
                                   const Eigen::MatrixXd& row_lower,
                                   const Eigen::MatrixXd& col_lower) {
  Eigen::MatrixXd z(mean.rows(), mean.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
  }
  return mean + row_lower.triangularView<Eigen::Lower>() * z *
                    col_lower.transpose().triangularView<Eigen::Upper>();
}

}  // namespace longimp
