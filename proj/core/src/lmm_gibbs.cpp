#include "longimp/lmm_gibbs.hpp"

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"

namespace longimp {

void LmmGibbs::initialize(const GibbsDesign& design, const Eigen::VectorXd& y,
                          std::span<const std::uint8_t> use) {
  const auto p = design.x.cols();
  beta_ = Eigen::VectorXd::Zero(p);
  double sum = 0, sq = 0, cnt = 0;
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    if (!use[static_cast<std::size_t>(r)]) continue;
    sum += y[r];
    sq += y[r] * y[r];
    ++cnt;
  }
  const double mean = cnt > 0 ? sum / cnt : 0.0;
  const double var = cnt > 1 ? std::max(sq / cnt - mean * mean, 1e-6) : 1.0;
  sigma2_ = unit_residual_ ? 1.0 : var;
  b_.clear();
  psi_.clear();
  for (const auto& lv : design.levels) {
    b_.push_back(Eigen::MatrixXd::Zero(lv.n_groups, lv.z.cols()));
    psi_.push_back(0.5 * var * Eigen::MatrixXd::Identity(lv.z.cols(), lv.z.cols()));
  }
}

Eigen::VectorXd LmmGibbs::linear_predictor(const GibbsDesign& design) const {
  Eigen::VectorXd eta = design.x * beta_;
  for (std::size_t l = 0; l < design.levels.size(); ++l) {
    const auto& lv = design.levels[l];
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      eta[r] += lv.z.row(r).dot(b_[l].row(lv.group[static_cast<std::size_t>(r)]));
    }
  }
  return eta;
}

void LmmGibbs::sweep(RngStream& rng, const GibbsDesign& design, const Eigen::VectorXd& y,
                     std::span<const std::uint8_t> use) {
  const auto n = y.size();
  const auto p = design.x.cols();
  if (sweeps_ == 0 || beta_.size() != p || b_.size() != design.levels.size()) initialize(design, y, use);

  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (use[static_cast<std::size_t>(r)]) rows.push_back(r);
  }
  if (static_cast<Eigen::Index>(rows.size()) <= p) {
    throw Error(ErrorKind::RankDeficient, "too few observed rows for the imputation model");
  }

  auto random_part = [&](Eigen::Index r, std::size_t skip) {
    double s = 0;
    for (std::size_t l = 0; l < design.levels.size(); ++l) {
      if (l == skip) continue;
      const auto& lv = design.levels[l];
      s += lv.z.row(r).dot(b_[l].row(lv.group[static_cast<std::size_t>(r)]));
    }
    return s;
  };
  const std::size_t none = design.levels.size();

  // beta | b, sigma2
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtr = Eigen::VectorXd::Zero(p);
  for (auto r : rows) {
    const double target = y[r] - random_part(r, none);
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(design.x.row(r).transpose());
    xtr += design.x.row(r).transpose() * target;
  }
  xtx = xtx.selfadjointView<Eigen::Lower>();
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::RankDeficient, "imputation model design is singular");
  }
  const Eigen::VectorXd bhat = llt.solve(xtr);
  beta_ = bhat + std::sqrt(sigma2_) * llt.matrixU().solve(standard_normal_vector(rng, p));

  // b | beta, sigma2, Psi, one level at a time
  for (std::size_t l = 0; l < design.levels.size(); ++l) {
    const auto& lv = design.levels[l];
    const auto q = lv.z.cols();
    std::vector<Eigen::MatrixXd> ztz(static_cast<std::size_t>(lv.n_groups), Eigen::MatrixXd::Zero(q, q));
    Eigen::MatrixXd ztr = Eigen::MatrixXd::Zero(lv.n_groups, q);
    for (auto r : rows) {
      const int g = lv.group[static_cast<std::size_t>(r)];
      const double res = y[r] - design.x.row(r).dot(beta_) - random_part(r, l);
      ztz[static_cast<std::size_t>(g)] += lv.z.row(r).transpose() * lv.z.row(r);
      ztr.row(g) += res * lv.z.row(r);
    }
    const Eigen::MatrixXd psi_inv = spd_inverse(psi_[l]);
    for (int g = 0; g < lv.n_groups; ++g) {
      Eigen::MatrixXd prec = psi_inv + ztz[static_cast<std::size_t>(g)] / sigma2_;
      Eigen::LLT<Eigen::MatrixXd> pl(prec);
      if (pl.info() != Eigen::Success) {
        throw Error(ErrorKind::NotPositiveDefinite, "random-effect precision is not positive definite");
      }
      const Eigen::VectorXd mean = pl.solve(ztr.row(g).transpose() / sigma2_);
      b_[l].row(g) = (mean + pl.matrixU().solve(standard_normal_vector(rng, q))).transpose();
    }
    Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(q, q) + b_[l].transpose() * b_[l];
    psi_[l] = inv_wishart_draw(rng, scale, static_cast<double>(q + 1 + lv.n_groups));
  }

  // sigma2 | rest
  if (!unit_residual_) {
    double ssr = 0;
    for (auto r : rows) {
      const double res = y[r] - design.x.row(r).dot(beta_) - random_part(r, none);
      ssr += res * res;
    }
    sigma2_ = std::max(ssr, 1e-12) / rng.chi_squared(static_cast<double>(rows.size()));
  }
  ++sweeps_;
}

}  // namespace longimp
