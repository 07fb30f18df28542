#include "longimp/jm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"
#include "longimp/tabular.hpp"

namespace longimp {

std::string to_string(CovMode mode) { return mode == CovMode::Common ? "common" : "random"; }

CovMode cov_mode_from_string(const std::string& text) {
  if (text == "common" || text == "fixed") return CovMode::Common;
  if (text == "random" || text == "cluster-specific") return CovMode::ClusterSpecific;
  throw Error(ErrorKind::BadConfig, "unknown covariance mode '" + text + "'");
}

int cluster_cov_dof(int p) { return 2 * p + 2; }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_complete(const Dataset& d, const std::string& name, const char* what) {
  if (!d.column_complete(d.index_of(name))) {
    throw Error(ErrorKind::InvalidSpec, std::string(what) + " '" + name + "' has missing cells");
  }
}

// Complete predictor block with a leading intercept. Binary factors enter
// as their level index; wider factors must be dummy-expanded first.
Eigen::MatrixXd predictor_block(const Dataset& d, const std::vector<std::string>& cols) {
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(cols.size()) + 1);
  m.col(0).setOnes();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const std::size_t c = d.index_of(cols[j]);
    if (d.column(c).kind == Kind::Categorical) {
      throw Error(ErrorKind::InvalidSpec,
                  "categorical predictor '" + cols[j] + "' must be dummy-expanded");
    }
    auto v = d.values(c);
    for (Eigen::Index r = 0; r < n; ++r) m(r, static_cast<Eigen::Index>(j) + 1) = v[static_cast<std::size_t>(r)];
  }
  return m;
}

// Draw from N(mean, P^-1) given the lower Cholesky factor of P.
Eigen::VectorXd draw_with_precision(RngStream& rng, const Eigen::VectorXd& mean,
                                    const Eigen::LLT<Eigen::MatrixXd>& prec) {
  Eigen::VectorXd z = standard_normal_vector(rng, mean.size());
  return mean + prec.matrixU().solve(z);
}

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    throw Error(ErrorKind::NotPositiveDefinite, std::string(what) + " is not positive definite");
  }
  return llt;
}

struct Pattern {
  std::vector<Eigen::Index> free;
  std::vector<Eigen::Index> obs;
  Eigen::LLT<Eigen::MatrixXd> pff;
  Eigen::MatrixXd pfo;
};

Pattern make_pattern(const Eigen::MatrixXd& prec, const std::string& key) {
  Pattern pt;
  for (std::size_t k = 0; k < key.size(); ++k) {
    (key[k] ? pt.free : pt.obs).push_back(static_cast<Eigen::Index>(k));
  }
  const auto nf = static_cast<Eigen::Index>(pt.free.size());
  const auto no = static_cast<Eigen::Index>(pt.obs.size());
  Eigen::MatrixXd ff(nf, nf);
  pt.pfo.resize(nf, no);
  for (Eigen::Index a = 0; a < nf; ++a) {
    for (Eigen::Index b = 0; b < nf; ++b) ff(a, b) = prec(pt.free[static_cast<std::size_t>(a)], pt.free[static_cast<std::size_t>(b)]);
    for (Eigen::Index b = 0; b < no; ++b) pt.pfo(a, b) = prec(pt.free[static_cast<std::size_t>(a)], pt.obs[static_cast<std::size_t>(b)]);
  }
  pt.pff = checked_llt(ff, "conditional precision");
  return pt;
}

// Latent blocks of a layout that carry observed levels, for the MH refresh.
struct LatentTrack {
  int first;
  int dims;
  std::vector<int> level;  // per row (or cluster); -1 when free
};

}  // namespace

void JmSpec::validate(const Dataset& d) const {
  if (y.empty()) throw Error(ErrorKind::InvalidSpec, "JM needs at least one incomplete variable");
  // Predictor blocks may share columns with each other, not with the responses.
  std::set<std::string> responses;
  for (const auto* list : {&y, &y2}) {
    for (const auto& name : *list) {
      d.index_of(name);
      if (!responses.insert(name).second) {
        throw Error(ErrorKind::InvalidSpec, "column '" + name + "' is listed twice");
      }
    }
  }
  for (const auto* list : {&x, &x2, &z}) {
    std::set<std::string> block;
    for (const auto& name : *list) {
      d.index_of(name);
      if (!block.insert(name).second || responses.count(name)) {
        throw Error(ErrorKind::InvalidSpec, "column '" + name + "' is listed twice");
      }
    }
  }
  for (const auto& name : x) require_complete(d, name, "predictor");
  for (const auto& name : x2) require_complete(d, name, "predictor");
  for (const auto& name : z) require_complete(d, name, "random-effect predictor");
  if (nimp < 1) throw Error(ErrorKind::InvalidSpec, "nimp must be >= 1");
  if (nburn < 1) throw Error(ErrorKind::InvalidSpec, "nburn must be >= 1");
  if (nbetween < 1) throw Error(ErrorKind::InvalidSpec, "nbetween must be >= 1");
  if (!clustered()) {
    if (!y2.empty() || !x2.empty() || !z.empty()) {
      throw Error(ErrorKind::InvalidSpec, "Y2, X2 and Z need a cluster variable");
    }
    if (cov_mode == CovMode::ClusterSpecific) {
      throw Error(ErrorKind::InvalidSpec, "cluster-specific covariances need a cluster variable");
    }
    return;
  }
  require_complete(d, cluster, "cluster variable");
  if (zero_random_effects && !y2.empty()) {
    throw Error(ErrorKind::InvalidSpec, "Y2 needs random effects");
  }
  int n_clusters = 0;
  auto idx = group_index(d, d.index_of(cluster), &n_clusters);
  if (cov_mode == CovMode::ClusterSpecific && n_clusters < 3) {
    throw Error(ErrorKind::TooFewClusters, "cluster-specific covariances need at least 3 clusters, got " +
                                               std::to_string(n_clusters));
  }
  for (const auto* list : {&y2, &x2}) {
    for (const auto& name : *list) {
      const std::size_t c = d.index_of(name);
      std::vector<double> value(static_cast<std::size_t>(n_clusters), std::nan(""));
      for (std::size_t r = 0; r < d.n_rows(); ++r) {
        if (d.is_missing(r, c)) continue;
        auto& v = value[static_cast<std::size_t>(idx[r])];
        if (std::isnan(v)) {
          v = d.value(r, c);
        } else if (v != d.value(r, c)) {
          throw Error(ErrorKind::InvalidSpec, "cluster-level variable '" + name + "' varies within a cluster");
        }
      }
    }
  }
}

struct JmSampler::Impl {
  JmSpec spec;
  Dataset data;
  LatentLayout lay1, lay2, lay2_rows;
  Eigen::Index n = 0, nc = 1;
  int p = 0, p2 = 0;
  Eigen::Index qx = 0, qx2 = 0, qz = 0;
  bool clustered = false, random_effects = false, specific = false;
  int nu = 0;

  std::vector<int> cl;
  std::vector<std::vector<Eigen::Index>> rows_of;
  Eigen::MatrixXd x, x2, z;
  Eigen::MatrixXd y, y2;
  std::vector<std::vector<std::uint8_t>> free1, free2;
  std::vector<LatentTrack> track1, track2;
  std::vector<std::uint8_t> bin_round;  // level-1 working columns to round adaptively
  std::vector<std::uint8_t> bin_round2;

  Eigen::MatrixXd beta, beta2, u, omega, psi, a_scale;
  std::vector<Eigen::MatrixXd> omegas, precs;
  Eigen::MatrixXd prec;
  Eigen::MatrixXd xtx_inv, xtx_inv_lower, x2tx2_inv, x2tx2_inv_lower;
  std::vector<Eigen::MatrixXd> xtx_c, ztz_c;
  std::vector<std::string> names;
  double accepted = 0, proposed = 0;

  Impl(RngStream& rng, const JmSpec& s, const Dataset& d);
  void refresh_precisions();
  Eigen::MatrixXd row_means() const;
  void draw_beta(RngStream& rng);
  void draw_u(RngStream& rng);
  void draw_beta2(RngStream& rng);
  void draw_psi(RngStream& rng);
  void draw_omega(RngStream& rng);
  void normalize();
  void impute(RngStream& rng, Eigen::MatrixXd& w, const Eigen::MatrixXd& mu,
              const std::vector<std::vector<std::uint8_t>>& free, std::vector<LatentTrack>& track,
              const std::function<const Eigen::MatrixXd&(Eigen::Index)>& prec_of,
              const std::function<int(Eigen::Index)>& prec_key);
  Eigen::MatrixXd e2() const;
  std::vector<double> parameters() const;
  Dataset completed() const;
};

JmSampler::Impl::Impl(RngStream& rng, const JmSpec& s, const Dataset& d) : spec(s), data(d) {
  spec.validate(d);
  n = static_cast<Eigen::Index>(d.n_rows());
  clustered = spec.clustered();
  random_effects = clustered && !spec.zero_random_effects;
  specific = spec.cov_mode == CovMode::ClusterSpecific;

  lay1 = make_layout(d, spec.y, spec.latent_factors);
  p = lay1.width;
  if (clustered) {
    int k = 0;
    cl = group_index(d, d.index_of(spec.cluster), &k);
    nc = k;
  } else {
    cl.assign(static_cast<std::size_t>(n), 0);
    nc = 1;
  }
  rows_of.assign(static_cast<std::size_t>(nc), {});
  for (Eigen::Index r = 0; r < n; ++r) rows_of[static_cast<std::size_t>(cl[static_cast<std::size_t>(r)])].push_back(r);

  x = predictor_block(d, spec.x);
  z = clustered ? predictor_block(d, spec.z) : Eigen::MatrixXd(n, 0);
  qx = x.cols();
  qz = z.cols();
  Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::LLT<Eigen::MatrixXd> xl(xtx);
  if (xl.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "JM predictors are collinear");
  xtx_inv = xl.solve(Eigen::MatrixXd::Identity(qx, qx));
  xtx_inv_lower = cholesky_lower(xtx_inv);

  auto st = encode_latent(rng, d, lay1);
  y = std::move(st.z);
  free1 = std::move(st.free);

  // Cluster-level block: one row per cluster, first observed value.
  if (!spec.y2.empty()) {
    std::vector<ColumnSpec> cols{ColumnSpec::continuous("cluster", Role::UnitId)};
    std::vector<std::vector<double>> vals(1, std::vector<double>(static_cast<std::size_t>(nc)));
    for (Eigen::Index i = 0; i < nc; ++i) vals[0][static_cast<std::size_t>(i)] = static_cast<double>(i);
    for (const auto& name : spec.y2) {
      const std::size_t c = d.index_of(name);
      auto spec_c = d.column(c);
      spec_c.role = Role::Analysis;
      cols.push_back(spec_c);
      std::vector<double> v(static_cast<std::size_t>(nc), std::nan(""));
      for (Eigen::Index r = 0; r < n; ++r) {
        if (!d.is_missing(static_cast<std::size_t>(r), c)) {
          v[static_cast<std::size_t>(cl[static_cast<std::size_t>(r)])] = d.value(static_cast<std::size_t>(r), c);
        }
      }
      vals.push_back(std::move(v));
    }
    Dataset level2(cols, vals, {}, Shape::Wide);
    lay2 = make_layout(level2, spec.y2, spec.latent_factors);
    lay2_rows = make_layout(d, spec.y2, spec.latent_factors);
    p2 = lay2.width;
    auto st2 = encode_latent(rng, level2, lay2);
    y2 = std::move(st2.z);
    free2 = std::move(st2.free);
    for (auto& b : lay2.blocks) {
      LatentTrack t{b.first, b.dims, {}};
      if (!b.latent) continue;
      t.level.resize(static_cast<std::size_t>(nc));
      for (Eigen::Index i = 0; i < nc; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        t.level[ui] = level2.is_missing(ui, b.column) ? -1 : static_cast<int>(level2.value(ui, b.column));
      }
      track2.push_back(std::move(t));
    }
    std::vector<std::size_t> firsts;
    for (const auto& rows : rows_of) firsts.push_back(static_cast<std::size_t>(rows.front()));
    Eigen::MatrixXd x2rows = predictor_block(d, spec.x2);
    x2.resize(nc, x2rows.cols());
    for (Eigen::Index i = 0; i < nc; ++i) x2.row(i) = x2rows.row(static_cast<Eigen::Index>(firsts[static_cast<std::size_t>(i)]));
    qx2 = x2.cols();
    Eigen::LLT<Eigen::MatrixXd> x2l(x2.transpose() * x2);
    if (x2l.info() != Eigen::Success) throw Error(ErrorKind::RankDeficient, "JM level-2 predictors are collinear");
    x2tx2_inv = x2l.solve(Eigen::MatrixXd::Identity(qx2, qx2));
    x2tx2_inv_lower = cholesky_lower(x2tx2_inv);
  }

  for (auto& b : lay1.blocks) {
    if (!b.latent) continue;
    LatentTrack t{b.first, b.dims, std::vector<int>(static_cast<std::size_t>(n))};
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      t.level[ur] = d.is_missing(ur, b.column) ? -1 : static_cast<int>(d.value(ur, b.column));
    }
    track1.push_back(std::move(t));
  }
  bin_round.assign(static_cast<std::size_t>(p), 0);
  for (auto& b : lay1.blocks) {
    if (!b.latent && b.n_levels == 2) bin_round[static_cast<std::size_t>(b.first)] = 1;
  }
  bin_round2.assign(static_cast<std::size_t>(p2), 0);
  for (auto& b : lay2.blocks) {
    if (!b.latent && b.n_levels == 2) bin_round2[static_cast<std::size_t>(b.first)] = 1;
  }

  // Missing non-latent cells start at the observed mean plus a little noise.
  auto init_free = [&](Eigen::MatrixXd& w, const std::vector<std::vector<std::uint8_t>>& fr,
                       const LatentLayout& lay) {
    for (const auto& b : lay.blocks) {
      if (b.latent) continue;
      const auto k = static_cast<std::size_t>(b.first);
      double sum = 0, sq = 0, cnt = 0;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        if (fr[k][static_cast<std::size_t>(r)]) continue;
        sum += w(r, b.first);
        sq += w(r, b.first) * w(r, b.first);
        ++cnt;
      }
      const double mean = cnt > 0 ? sum / cnt : 0.0;
      const double sd = cnt > 1 ? std::sqrt(std::max(sq / cnt - mean * mean, 0.0)) : 1.0;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        if (fr[k][static_cast<std::size_t>(r)]) w(r, b.first) = mean + 0.01 * (sd > 0 ? sd : 1.0) * rng.normal();
      }
    }
  };
  init_free(y, free1, lay1);
  if (p2 > 0) init_free(y2, free2, lay2);

  beta = Eigen::MatrixXd::Zero(qx, p);
  omega = Eigen::MatrixXd::Identity(p, p);
  nu = cluster_cov_dof(p);
  if (specific) {
    omegas.assign(static_cast<std::size_t>(nc), omega);
    a_scale = static_cast<double>(nu - p - 1) * Eigen::MatrixXd::Identity(p, p);
  }
  if (random_effects) {
    u = Eigen::MatrixXd::Zero(nc, qz * p);
    psi = Eigen::MatrixXd::Identity(qz * p + p2, qz * p + p2);
    ztz_c.resize(static_cast<std::size_t>(nc));
    for (Eigen::Index i = 0; i < nc; ++i) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(qz, qz);
      for (auto r : rows_of[static_cast<std::size_t>(i)]) m += z.row(r).transpose() * z.row(r);
      ztz_c[static_cast<std::size_t>(i)] = m;
    }
  } else {
    u = Eigen::MatrixXd::Zero(nc, qz * p);
  }
  if (p2 > 0) beta2 = Eigen::MatrixXd::Zero(qx2, p2);
  if (specific) {
    xtx_c.resize(static_cast<std::size_t>(nc));
    for (Eigen::Index i = 0; i < nc; ++i) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(qx, qx);
      for (auto r : rows_of[static_cast<std::size_t>(i)]) m += x.row(r).transpose() * x.row(r);
      xtx_c[static_cast<std::size_t>(i)] = m;
    }
  }
  refresh_precisions();

  std::vector<std::string> xn{"Intercept"}, x2n{"Intercept"}, zn{"Intercept"};
  for (const auto& v : spec.x) xn.push_back(v);
  for (const auto& v : spec.x2) x2n.push_back(v);
  for (const auto& v : spec.z) zn.push_back(v);
  for (Eigen::Index a = 0; a < qx; ++a) {
    for (int k = 0; k < p; ++k) names.push_back("beta[" + xn[static_cast<std::size_t>(a)] + "," + lay1.names[static_cast<std::size_t>(k)] + "]");
  }
  for (Eigen::Index a = 0; a < qx2; ++a) {
    for (int k = 0; k < p2; ++k) names.push_back("beta2[" + x2n[static_cast<std::size_t>(a)] + "," + lay2.names[static_cast<std::size_t>(k)] + "]");
  }
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) names.push_back("omega[" + lay1.names[static_cast<std::size_t>(a)] + "," + lay1.names[static_cast<std::size_t>(b)] + "]");
  }
  if (random_effects) {
    std::vector<std::string> pn;
    for (int k = 0; k < p; ++k) {
      for (Eigen::Index a = 0; a < qz; ++a) pn.push_back(zn[static_cast<std::size_t>(a)] + ":" + lay1.names[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < p2; ++k) pn.push_back(lay2.names[static_cast<std::size_t>(k)]);
    for (std::size_t a = 0; a < pn.size(); ++a) {
      for (std::size_t b = a; b < pn.size(); ++b) names.push_back("psi[" + pn[a] + "," + pn[b] + "]");
    }
  }
}

void JmSampler::Impl::refresh_precisions() {
  prec = spd_inverse(omega);
  if (specific) {
    precs.resize(omegas.size());
    for (std::size_t i = 0; i < omegas.size(); ++i) precs[i] = spd_inverse(omegas[i]);
  }
}

Eigen::MatrixXd JmSampler::Impl::row_means() const {
  Eigen::MatrixXd mu = x * beta;
  if (random_effects) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const Eigen::Index i = cl[static_cast<std::size_t>(r)];
      for (int k = 0; k < p; ++k) mu(r, k) += z.row(r).dot(u.row(i).segment(k * qz, qz));
    }
  }
  return mu;
}

void JmSampler::Impl::draw_beta(RngStream& rng) {
  Eigen::MatrixXd resid = y;
  if (random_effects) resid -= row_means() - x * beta;
  if (!specific) {
    Eigen::MatrixXd bhat = xtx_inv * (x.transpose() * resid);
    beta = matrix_normal_draw(rng, bhat, xtx_inv_lower, cholesky_lower(omega));
    return;
  }
  const Eigen::Index dim = qx * p;
  Eigen::MatrixXd pr = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(qx, p);
  for (Eigen::Index i = 0; i < nc; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& oi = precs[ui];
    for (int k = 0; k < p; ++k) {
      for (int l = 0; l < p; ++l) pr.block(k * qx, l * qx, qx, qx) += oi(k, l) * xtx_c[ui];
    }
    Eigen::MatrixXd xr = Eigen::MatrixXd::Zero(qx, p);
    for (auto r : rows_of[ui]) xr += x.row(r).transpose() * resid.row(r);
    lin += xr * oi;
  }
  auto llt = checked_llt(pr, "coefficient precision");
  Eigen::VectorXd h = Eigen::Map<Eigen::VectorXd>(lin.data(), dim);
  Eigen::VectorXd draw = draw_with_precision(rng, llt.solve(h), llt);
  beta = Eigen::Map<Eigen::MatrixXd>(draw.data(), qx, p);
}

Eigen::MatrixXd JmSampler::Impl::e2() const { return y2 - x2 * beta2; }

void JmSampler::Impl::draw_u(RngStream& rng) {
  const Eigen::Index du = qz * p;
  Eigen::MatrixXd cond = psi.topLeftCorner(du, du);
  Eigen::MatrixXd gain;  // prior mean of u_i is gain * e2_i
  Eigen::MatrixXd res2;
  if (p2 > 0) {
    const Eigen::MatrixXd pee = psi.bottomRightCorner(p2, p2);
    const Eigen::MatrixXd pue = psi.topRightCorner(du, p2);
    auto llt = checked_llt(pee, "level-2 covariance");
    gain = llt.solve(pue.transpose()).transpose();
    cond -= gain * pue.transpose();
    res2 = e2();
  }
  const Eigen::MatrixXd cond_inv = spd_inverse(0.5 * (cond + cond.transpose()));
  const Eigen::MatrixXd xb = x * beta;
  for (Eigen::Index i = 0; i < nc; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Eigen::MatrixXd& oi = specific ? precs[ui] : prec;
    Eigen::MatrixXd zr = Eigen::MatrixXd::Zero(qz, p);
    for (auto r : rows_of[ui]) zr += z.row(r).transpose() * (y.row(r) - xb.row(r));
    Eigen::MatrixXd lin = zr * oi;
    Eigen::MatrixXd pr = cond_inv;
    for (int k = 0; k < p; ++k) {
      for (int l = 0; l < p; ++l) pr.block(k * qz, l * qz, qz, qz) += oi(k, l) * ztz_c[ui];
    }
    Eigen::VectorXd h = Eigen::Map<Eigen::VectorXd>(lin.data(), du);
    if (p2 > 0) h += cond_inv * (gain * res2.row(i).transpose());
    auto llt = checked_llt(pr, "random-effect precision");
    u.row(i) = draw_with_precision(rng, llt.solve(h), llt).transpose();
  }
}

void JmSampler::Impl::draw_beta2(RngStream& rng) {
  const Eigen::Index du = qz * p;
  const Eigen::MatrixXd puu = psi.topLeftCorner(du, du);
  const Eigen::MatrixXd pue = psi.topRightCorner(du, p2);
  auto llt = checked_llt(puu, "random-effect covariance");
  const Eigen::MatrixXd g = llt.solve(pue);  // du x p2
  Eigen::MatrixXd cond = psi.bottomRightCorner(p2, p2) - pue.transpose() * g;
  cond = 0.5 * (cond + cond.transpose());
  const Eigen::MatrixXd target = y2 - u * g;
  Eigen::MatrixXd bhat = x2tx2_inv * (x2.transpose() * target);
  beta2 = matrix_normal_draw(rng, bhat, x2tx2_inv_lower, cholesky_lower(cond));
}

void JmSampler::Impl::draw_psi(RngStream& rng) {
  const Eigen::Index du = qz * p;
  Eigen::MatrixXd w(nc, du + p2);
  w.leftCols(du) = u;
  if (p2 > 0) w.rightCols(p2) = e2();
  const Eigen::Index dim = du + p2;
  Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(dim, dim) + w.transpose() * w;
  psi = inv_wishart_draw(rng, scale, static_cast<double>(dim + 1 + nc));
}

void JmSampler::Impl::draw_omega(RngStream& rng) {
  const Eigen::MatrixXd e = y - row_means();
  if (!specific) {
    Eigen::MatrixXd scale = Eigen::MatrixXd::Identity(p, p) + e.transpose() * e;
    omega = inv_wishart_draw(rng, scale, static_cast<double>(p + 1 + n));
    refresh_precisions();
    return;
  }
  // Omega_i ~ IW(nu, A), A ~ Wishart(p, I / p).
  Eigen::MatrixXd sum_prec = static_cast<double>(p) * Eigen::MatrixXd::Identity(p, p);
  for (const auto& pi : precs) sum_prec += pi;
  a_scale = wishart_draw(rng, spd_inverse(sum_prec), static_cast<double>(p + nc * nu));
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < nc; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    Eigen::MatrixXd s = a_scale;
    for (auto r : rows_of[ui]) s += e.row(r).transpose() * e.row(r);
    omegas[ui] = inv_wishart_draw(rng, s, static_cast<double>(nu) + static_cast<double>(rows_of[ui].size()));
    mean += omegas[ui];
  }
  omega = mean / static_cast<double>(nc);
  refresh_precisions();
}

// Latent scales are not identified; each factor's latent block is rescaled
// by a common factor so that its mean latent variance is 1.
void JmSampler::Impl::normalize() {
  Eigen::VectorXd s1 = Eigen::VectorXd::Ones(p);
  Eigen::VectorXd s2 = Eigen::VectorXd::Ones(p2);
  bool any = false;
  for (const auto& b : lay1.blocks) {
    if (!b.latent) continue;
    double c = 0;
    for (int k = 0; k < b.dims; ++k) c += omega(b.first + k, b.first + k);
    c /= b.dims;
    for (int k = 0; k < b.dims; ++k) s1[b.first + k] = 1.0 / std::sqrt(c);
    any = true;
  }
  const Eigen::Index du = qz * p;
  for (const auto& b : lay2.blocks) {
    if (!b.latent) continue;
    double c = 0;
    for (int k = 0; k < b.dims; ++k) c += psi(du + b.first + k, du + b.first + k);
    c /= b.dims;
    for (int k = 0; k < b.dims; ++k) s2[b.first + k] = 1.0 / std::sqrt(c);
    any = true;
  }
  if (!any) return;
  y = y * s1.asDiagonal();
  beta = beta * s1.asDiagonal();
  omega = s1.asDiagonal() * omega * s1.asDiagonal();
  for (auto& o : omegas) o = s1.asDiagonal() * o * s1.asDiagonal();
  if (specific) a_scale = s1.asDiagonal() * a_scale * s1.asDiagonal();
  if (random_effects) {
    Eigen::VectorXd sp(du + p2);
    for (int k = 0; k < p; ++k) sp.segment(k * qz, qz).setConstant(s1[k]);
    if (p2 > 0) sp.tail(p2) = s2;
    u = u * sp.head(du).asDiagonal();
    psi = sp.asDiagonal() * psi * sp.asDiagonal();
  }
  if (p2 > 0) {
    y2 = y2 * s2.asDiagonal();
    beta2 = beta2 * s2.asDiagonal();
  }
  refresh_precisions();
}

void JmSampler::Impl::impute(RngStream& rng, Eigen::MatrixXd& w, const Eigen::MatrixXd& mu,
                             const std::vector<std::vector<std::uint8_t>>& free,
                             std::vector<LatentTrack>& track,
                             const std::function<const Eigen::MatrixXd&(Eigen::Index)>& prec_of,
                             const std::function<int(Eigen::Index)>& prec_key) {
  const auto width = static_cast<std::size_t>(w.cols());
  std::map<std::pair<int, std::string>, Pattern> cache;
  std::string key(width, '\0');
  Eigen::VectorXd dev(w.cols());
  std::vector<double> buf;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const auto ur = static_cast<std::size_t>(r);
    bool any_free = false;
    for (std::size_t k = 0; k < width; ++k) {
      key[k] = static_cast<char>(free[k][ur]);
      any_free = any_free || free[k][ur];
    }
    const Eigen::MatrixXd& pm = prec_of(r);
    if (any_free) {
      auto [it, fresh] = cache.try_emplace({prec_key(r), key});
      if (fresh) it->second = make_pattern(pm, key);
      const Pattern& pt = it->second;
      const auto nf = static_cast<Eigen::Index>(pt.free.size());
      Eigen::VectorXd ro(static_cast<Eigen::Index>(pt.obs.size()));
      for (std::size_t b = 0; b < pt.obs.size(); ++b) ro[static_cast<Eigen::Index>(b)] = w(r, pt.obs[b]) - mu(r, pt.obs[b]);
      Eigen::VectorXd mean(nf);
      for (Eigen::Index a = 0; a < nf; ++a) mean[a] = mu(r, pt.free[static_cast<std::size_t>(a)]);
      if (ro.size() > 0) mean -= pt.pff.solve(pt.pfo * ro);
      Eigen::VectorXd draw = draw_with_precision(rng, mean, pt.pff);
      for (Eigen::Index a = 0; a < nf; ++a) w(r, pt.free[static_cast<std::size_t>(a)]) = draw[a];
    }
    // Metropolis-Hastings refresh of latents behind observed levels.
    bool has_obs_latent = false;
    for (const auto& t : track) has_obs_latent = has_obs_latent || t.level[ur] >= 0;
    if (!has_obs_latent) continue;
    dev = w.row(r) - mu.row(r);
    for (auto& t : track) {
      const int level = t.level[ur];
      if (level < 0) continue;
      buf.resize(static_cast<std::size_t>(t.dims));
      for (int k = 0; k < t.dims; ++k) buf[static_cast<std::size_t>(k)] = w(r, t.first + k);
      for (int k = 0; k < t.dims; ++k) {
        const Eigen::Index j = t.first + k;
        const double pjj = pm(j, j);
        const double cmean = mu(r, j) - (pm.row(j).dot(dev) - pjj * dev[j]) / pjj;
        const double cvar = 1.0 / pjj;
        const double cur = w(r, j);
        const double prop = cur + rng.normal();
        const Interval iv = latent_interval(level, buf, static_cast<std::size_t>(k));
        proposed += 1;
        if (!iv.contains(prop)) continue;
        const double log_ratio = ((cur - cmean) * (cur - cmean) - (prop - cmean) * (prop - cmean)) / (2.0 * cvar);
        if (log_ratio >= 0 || rng.uniform() < std::exp(log_ratio)) {
          w(r, j) = prop;
          buf[static_cast<std::size_t>(k)] = prop;
          dev[j] = prop - mu(r, j);
          accepted += 1;
        }
      }
    }
  }
}

std::vector<double> JmSampler::Impl::parameters() const {
  std::vector<double> out;
  out.reserve(names.size());
  for (Eigen::Index a = 0; a < qx; ++a) {
    for (int k = 0; k < p; ++k) out.push_back(beta(a, k));
  }
  for (Eigen::Index a = 0; a < qx2; ++a) {
    for (int k = 0; k < p2; ++k) out.push_back(beta2(a, k));
  }
  for (int a = 0; a < p; ++a) {
    for (int b = a; b < p; ++b) out.push_back(omega(a, b));
  }
  if (random_effects) {
    for (Eigen::Index a = 0; a < psi.rows(); ++a) {
      for (Eigen::Index b = a; b < psi.cols(); ++b) out.push_back(psi(a, b));
    }
  }
  return out;
}

Dataset JmSampler::Impl::completed() const {
  auto rounded = [](Eigen::MatrixXd w, const std::vector<std::uint8_t>& round,
                    const std::vector<std::vector<std::uint8_t>>& free) {
    for (std::size_t k = 0; k < round.size(); ++k) {
      if (!round[k]) continue;
      const auto col = static_cast<Eigen::Index>(k);
      std::vector<double> v(static_cast<std::size_t>(w.rows()));
      for (Eigen::Index r = 0; r < w.rows(); ++r) v[static_cast<std::size_t>(r)] = w(r, col);
      auto out = adaptive_round(v, free[k]);
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, col) = out[static_cast<std::size_t>(r)];
    }
    return w;
  };
  Dataset out = decode_latent(data, lay1, rounded(y, bin_round, free1));
  if (p2 > 0) {
    Eigen::MatrixXd w2 = rounded(y2, bin_round2, free2);
    Eigen::MatrixXd rows(n, p2);
    for (Eigen::Index r = 0; r < n; ++r) rows.row(r) = w2.row(cl[static_cast<std::size_t>(r)]);
    out = decode_latent(out, lay2_rows, rows);
  }
  return out;
}

JmSampler::JmSampler(RngStream& rng, const JmSpec& spec, const Dataset& d)
    : impl_(std::make_unique<Impl>(rng, spec, d)) {}
JmSampler::~JmSampler() = default;
JmSampler::JmSampler(JmSampler&&) noexcept = default;
JmSampler& JmSampler::operator=(JmSampler&&) noexcept = default;

void JmSampler::sweep(RngStream& rng) {
  Impl& s = *impl_;
  s.accepted = 0;
  s.proposed = 0;
  s.draw_beta(rng);
  if (s.random_effects) s.draw_u(rng);
  if (s.p2 > 0) s.draw_beta2(rng);
  if (s.random_effects) s.draw_psi(rng);
  s.draw_omega(rng);
  s.normalize();
  const Eigen::MatrixXd mu = s.row_means();
  s.impute(
      rng, s.y, mu, s.free1, s.track1,
      [&s](Eigen::Index r) -> const Eigen::MatrixXd& {
        return s.specific ? s.precs[static_cast<std::size_t>(s.cl[static_cast<std::size_t>(r)])] : s.prec;
      },
      [&s](Eigen::Index r) { return s.specific ? s.cl[static_cast<std::size_t>(r)] : 0; });
  if (s.p2 > 0) {
    const Eigen::Index du = s.qz * s.p;
    const Eigen::MatrixXd puu = s.psi.topLeftCorner(du, du);
    const Eigen::MatrixXd pue = s.psi.topRightCorner(du, s.p2);
    const Eigen::MatrixXd g = checked_llt(puu, "random-effect covariance").solve(pue);
    Eigen::MatrixXd cond = s.psi.bottomRightCorner(s.p2, s.p2) - pue.transpose() * g;
    const Eigen::MatrixXd q = spd_inverse(0.5 * (cond + cond.transpose()));
    const Eigen::MatrixXd mu2 = s.x2 * s.beta2 + s.u * g;
    s.impute(
        rng, s.y2, mu2, s.free2, s.track2, [&q](Eigen::Index) -> const Eigen::MatrixXd& { return q; },
        [](Eigen::Index) { return 0; });
  }
}

Dataset JmSampler::completed() const { return impl_->completed(); }
const std::vector<std::string>& JmSampler::parameter_names() const { return impl_->names; }
std::vector<double> JmSampler::parameters() const { return impl_->parameters(); }
const Eigen::MatrixXd& JmSampler::working_y() const { return impl_->y; }
const Eigen::MatrixXd& JmSampler::beta() const { return impl_->beta; }
Eigen::MatrixXd JmSampler::omega() const { return impl_->omega; }
const Eigen::MatrixXd& JmSampler::psi() const { return impl_->psi; }
const LatentLayout& JmSampler::layout() const { return impl_->lay1; }
double JmSampler::mh_acceptance() const {
  return impl_->proposed > 0 ? impl_->accepted / impl_->proposed : std::nan("");
}

JmResult run_jm(RngStream& rng, const JmSpec& spec, const Dataset& d) {
  JmSampler sampler(rng, spec, d);
  JmResult out;
  out.stack.original = d;
  out.trace = ChainTrace(sampler.parameter_names());
  const long total = spec.nburn + static_cast<long>(spec.nimp - 1) * spec.nbetween;
  for (long it = 1; it <= total; ++it) {
    sampler.sweep(rng);
    out.trace.push(sampler.parameters());
    if (it >= spec.nburn && (it - spec.nburn) % spec.nbetween == 0) {
      out.stack.imputations.push_back(sampler.completed());
    }
  }
  return out;
}

}  // namespace longimp
