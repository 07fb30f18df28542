#include "longimp/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"
#include "longimp/latent.hpp"
#include "longimp/regression.hpp"
#include "longimp/tabular.hpp"

namespace longimp {

namespace {

struct MethodName {
  UniMethod method;
  const char* name;
};

constexpr MethodName kMethodNames[] = {
    {UniMethod::None, "none"},
    {UniMethod::Norm, "norm"},
    {UniMethod::Logreg, "logreg"},
    {UniMethod::Polr, "polr"},
    {UniMethod::Pmm, "pmm"},
    {UniMethod::Pan2l, "2l.pan"},
    {UniMethod::Latent2l, "2l.latent"},
    {UniMethod::Pmm2l, "2l.pmm"},
    {UniMethod::Only2lNorm, "2lonly.norm"},
    {UniMethod::Only2lPmm, "2lonly.pmm"},
    {UniMethod::MlLmerContinuous, "ml.lmer.continuous"},
    {UniMethod::MlLmerPmm, "ml.lmer.pmm"},
};

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

// Keeps a linearly independent subset of the columns, judged on `rows`.
Eigen::MatrixXd drop_collinear(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows,
                               const std::vector<std::string>& names, const std::string& target,
                               std::vector<std::string>* warnings) {
  auto keep = independent_columns(take_rows(x, rows));
  if (static_cast<Eigen::Index>(keep.size()) == x.cols()) return x;
  if (warnings) {
    std::string dropped;
    std::size_t k = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (k < keep.size() && keep[k] == c) {
        ++k;
        continue;
      }
      dropped += (dropped.empty() ? "" : ", ") + names[static_cast<std::size_t>(c)];
    }
    warnings->push_back("imputation model for '" + target + "': dropped collinear predictors " + dropped);
  }
  return take_cols(x, keep);
}

Eigen::VectorXd draw_from_cov(RngStream& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-10 * std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    llt.compute(cov + jitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::SingularFit, "coefficient covariance is not positive definite");
    }
  }
  return mean + llt.matrixL() * standard_normal_vector(rng, mean.size());
}

struct Split {
  std::vector<Eigen::Index> obs;
  std::vector<Eigen::Index> mis;
};

Split split_rows(std::span<const std::uint8_t> missing) {
  Split s;
  for (std::size_t r = 0; r < missing.size(); ++r) {
    (missing[r] ? s.mis : s.obs).push_back(static_cast<Eigen::Index>(r));
  }
  return s;
}

// Rows collapsed to one unit per value of a grouping column.
struct Units {
  std::vector<int> of_row;
  int n = 0;
  std::vector<std::vector<Eigen::Index>> rows;
};

Units make_units(const Dataset& d, std::size_t col) {
  Units u;
  u.of_row = group_index(d, col, &u.n);
  u.rows.resize(static_cast<std::size_t>(u.n));
  for (std::size_t r = 0; r < u.of_row.size(); ++r) {
    u.rows[static_cast<std::size_t>(u.of_row[r])].push_back(static_cast<Eigen::Index>(r));
  }
  return u;
}

Eigen::MatrixXd unit_means(const Eigen::MatrixXd& x, const Units& u) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(u.n, x.cols());
  for (int g = 0; g < u.n; ++g) {
    const auto& rows = u.rows[static_cast<std::size_t>(g)];
    for (auto r : rows) out.row(g) += x.row(r);
    out.row(g) /= static_cast<double>(rows.size());
  }
  return out;
}

// Unit-level target: the first observed value in each unit.
struct UnitTarget {
  Eigen::VectorXd y;
  std::vector<std::uint8_t> missing;
};

UnitTarget unit_target(const WorkingData& w, std::size_t target, const Units& u) {
  UnitTarget t{Eigen::VectorXd::Zero(u.n), std::vector<std::uint8_t>(static_cast<std::size_t>(u.n), 1)};
  auto miss = w.missing(target);
  const auto& v = w.column(target);
  for (int g = 0; g < u.n; ++g) {
    const auto ug = static_cast<std::size_t>(g);
    t.y[g] = v[static_cast<std::size_t>(u.rows[ug].front())];
    for (auto r : u.rows[ug]) {
      if (!miss[static_cast<std::size_t>(r)]) {
        t.y[g] = v[static_cast<std::size_t>(r)];
        t.missing[ug] = 0;
        break;
      }
    }
  }
  return t;
}

// Writes unit values back to every missing row of the unit.
void broadcast(WorkingData& w, std::size_t target, const Units& u, const Eigen::VectorXd& unit_values) {
  auto miss = w.missing(target);
  auto& v = w.column(target);
  for (int g = 0; g < u.n; ++g) {
    for (auto r : u.rows[static_cast<std::size_t>(g)]) {
      if (miss[static_cast<std::size_t>(r)]) v[static_cast<std::size_t>(r)] = unit_values[g];
    }
  }
}

int donor_count(int k, std::size_t donors, const std::string& target, std::vector<std::string>* warnings) {
  if (donors == 0) throw Error(ErrorKind::TooFewDonors, "no donors for '" + target + "'");
  if (static_cast<std::size_t>(k) > donors) {
    if (warnings) {
      warnings->push_back("pmm for '" + target + "': only " + std::to_string(donors) + " donors, k reduced");
    }
    return static_cast<int>(donors);
  }
  return k;
}

void require_kind(UniMethod method, const ColumnSpec& spec) {
  bool ok = true;
  switch (method) {
    case UniMethod::Norm:
    case UniMethod::Pan2l:
    case UniMethod::Only2lNorm:
    case UniMethod::MlLmerContinuous:
      ok = spec.kind == Kind::Continuous;
      break;
    case UniMethod::Logreg:
    case UniMethod::Latent2l:
      ok = spec.kind == Kind::Binary;
      break;
    case UniMethod::Polr:
      ok = spec.is_factor();
      break;
    default:
      break;
  }
  if (!ok) {
    throw Error(ErrorKind::InvalidSpec, "method " + to_string(method) + " does not fit " +
                                            to_string(spec.kind) + " column '" + spec.name + "'");
  }
}

// Single-level regression imputers on an arbitrary design (rows or units).
Eigen::VectorXd impute_single(RngStream& rng, UniMethod method, const Eigen::MatrixXd& x_all,
                              const Eigen::VectorXd& y_all, const Split& s, const ColumnSpec& spec,
                              const std::vector<std::string>& names, const UnivariateOptions& options,
                              std::vector<std::string>* warnings) {
  const Eigen::MatrixXd x = drop_collinear(x_all, s.obs, names, spec.name, warnings);
  const Eigen::MatrixXd xo = take_rows(x, s.obs);
  const Eigen::MatrixXd xm = take_rows(x, s.mis);
  Eigen::VectorXd yo(static_cast<Eigen::Index>(s.obs.size()));
  for (std::size_t i = 0; i < s.obs.size(); ++i) yo[static_cast<Eigen::Index>(i)] = y_all[s.obs[i]];
  Eigen::VectorXd out(xm.rows());

  auto pmm = [&]() {
    LinearDraw ld = fit_linear_and_draw(rng, xo, yo, warnings);
    const Eigen::VectorXd dp = xo * ld.beta_hat;
    const Eigen::VectorXd tp = xm * ld.beta_draw;
    const int k = donor_count(options.pmm_donors, s.obs.size(), spec.name, warnings);
    auto pick = pmm_match(rng, std::span<const double>(dp.data(), static_cast<std::size_t>(dp.size())),
                          std::span<const double>(tp.data(), static_cast<std::size_t>(tp.size())), k);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = yo[static_cast<Eigen::Index>(pick[static_cast<std::size_t>(i)])];
  };

  try {
    switch (method) {
      case UniMethod::Norm:
      case UniMethod::Only2lNorm: {
        LinearDraw ld = fit_linear_and_draw(rng, xo, yo, warnings);
        const double sd = std::sqrt(ld.sigma2_draw);
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = xm.row(i).dot(ld.beta_draw) + sd * rng.normal();
        break;
      }
      case UniMethod::Logreg: {
        GlmFit fit = fit_logistic(xo, yo);
        const Eigen::VectorXd b = draw_from_cov(rng, fit.beta_hat, fit.cov_hat);
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = rng.bernoulli(expit(xm.row(i).dot(b))) ? 1.0 : 0.0;
        break;
      }
      case UniMethod::Polr: {
        const int k = static_cast<int>(spec.levels.size());
        // polr carries no intercept column
        const Eigen::MatrixXd xo1 = xo.rightCols(xo.cols() - 1);
        const Eigen::MatrixXd xm1 = xm.rightCols(xm.cols() - 1);
        Eigen::VectorXi yi = yo.cast<int>();
        GlmFit fit = fit_polr(xo1, yi, k);
        Eigen::VectorXd b = draw_from_cov(rng, fit.beta_hat, fit.cov_hat);
        Eigen::VectorXd zeta = b.head(k - 1);
        std::sort(zeta.data(), zeta.data() + zeta.size());
        const Eigen::VectorXd beta = b.tail(b.size() - (k - 1));
        for (Eigen::Index i = 0; i < out.size(); ++i) {
          auto probs = polr_probabilities(zeta, xm1.row(i).dot(beta));
          double u = rng.uniform();
          int level = k - 1;
          for (int c = 0; c < k; ++c) {
            u -= probs[static_cast<std::size_t>(c)];
            if (u <= 0) {
              level = c;
              break;
            }
          }
          out[i] = level;
        }
        break;
      }
      case UniMethod::Pmm:
      case UniMethod::Only2lPmm:
        pmm();
        break;
      default:
        throw Error(ErrorKind::InvalidSpec, "not a single-level method: " + to_string(method));
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::PerfectSeparation || !options.separation_fallback) throw;
    if (warnings) {
      warnings->push_back("imputation model for '" + spec.name + "': " + std::string(e.what()) +
                          "; falling back to pmm");
    }
    pmm();
  }
  return out;
}

// LMM-based imputers driven by the cached Gibbs sampler.
Eigen::VectorXd impute_gibbs(RngStream& rng, UniMethod method, std::size_t target, const GibbsDesign& gd,
                             const Eigen::VectorXd& y_all, const Split& s, const ColumnSpec& spec,
                             SamplerCache& cache, const UnivariateOptions& options,
                             std::vector<std::string>* warnings) {
  const bool latent = method == UniMethod::Latent2l;
  auto& sampler = cache.lmm.try_emplace(target, latent).first->second;
  int& visits = cache.visits[target];
  const int sweeps = visits == 0 ? options.first_visit_sweeps : options.later_visit_sweeps;
  ++visits;
  const auto n = y_all.size();
  std::vector<std::uint8_t> use(static_cast<std::size_t>(n), 0);
  for (auto r : s.obs) use[static_cast<std::size_t>(r)] = 1;
  Eigen::VectorXd out(static_cast<Eigen::Index>(s.mis.size()));

  if (!latent) {
    for (int i = 0; i < std::max(sweeps, 1); ++i) sampler.sweep(rng, gd, y_all, use);
    const Eigen::VectorXd eta = sampler.linear_predictor(gd);
    if (uses_pmm(method)) {
      std::vector<double> dp, tp;
      for (auto r : s.obs) dp.push_back(eta[r]);
      for (auto r : s.mis) tp.push_back(eta[r]);
      const int k = donor_count(options.pmm_donors, dp.size(), spec.name, warnings);
      auto pick = pmm_match(rng, dp, tp, k);
      for (std::size_t i = 0; i < s.mis.size(); ++i) out[static_cast<Eigen::Index>(i)] = y_all[s.obs[pick[i]]];
    } else {
      const double sd = std::sqrt(sampler.residual_variance());
      for (std::size_t i = 0; i < s.mis.size(); ++i) out[static_cast<Eigen::Index>(i)] = eta[s.mis[i]] + sd * rng.normal();
    }
    return out;
  }

  // Binary target through one latent normal with unit residual variance.
  auto [it, fresh] = cache.latent.try_emplace(target, Eigen::VectorXd::Zero(n));
  Eigen::VectorXd& z = it->second;
  if (fresh) {
    for (auto r : s.obs) z[r] = sample_latent(rng, static_cast<int>(y_all[r]), 2)[0];
  }
  for (int i = 0; i < std::max(sweeps, 1); ++i) {
    sampler.sweep(rng, gd, z, use);
    const Eigen::VectorXd eta = sampler.linear_predictor(gd);
    for (auto r : s.mis) z[r] = eta[r] + rng.normal();
    for (auto r : s.obs) {
      const double cur = z[r];
      const double prop = cur + rng.normal();
      const double zs[1] = {prop};
      const Interval iv = latent_interval(static_cast<int>(y_all[r]), zs, 0);
      if (!iv.contains(prop)) continue;
      const double log_ratio = 0.5 * ((cur - eta[r]) * (cur - eta[r]) - (prop - eta[r]) * (prop - eta[r]));
      if (log_ratio >= 0 || rng.uniform() < std::exp(log_ratio)) z[r] = prop;
    }
  }
  for (std::size_t i = 0; i < s.mis.size(); ++i) {
    const double zs[1] = {z[s.mis[i]]};
    out[static_cast<Eigen::Index>(i)] = decode_latent(std::span<const double>(zs, 1));
  }
  return out;
}

}  // namespace

std::string to_string(UniMethod m) {
  for (const auto& e : kMethodNames) {
    if (e.method == m) return e.name;
  }
  return "?";
}

UniMethod uni_method_from_string(const std::string& text) {
  if (text.empty()) return UniMethod::None;
  if (text == "2l.jomo") return UniMethod::Latent2l;
  for (const auto& e : kMethodNames) {
    if (text == e.name) return e.method;
  }
  throw Error(ErrorKind::UnsupportedMethod, "unknown univariate method '" + text + "'");
}

bool is_multilevel(UniMethod m) {
  switch (m) {
    case UniMethod::Pan2l:
    case UniMethod::Latent2l:
    case UniMethod::Pmm2l:
    case UniMethod::Only2lNorm:
    case UniMethod::Only2lPmm:
    case UniMethod::MlLmerContinuous:
    case UniMethod::MlLmerPmm:
      return true;
    default:
      return false;
  }
}

bool uses_pmm(UniMethod m) {
  return m == UniMethod::Pmm || m == UniMethod::Pmm2l || m == UniMethod::Only2lPmm ||
         m == UniMethod::MlLmerPmm;
}

PredictorMatrix::PredictorMatrix(std::vector<std::string> names)
    : names_(std::move(names)),
      codes_(Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(names_.size()), static_cast<Eigen::Index>(names_.size()))) {}

std::size_t PredictorMatrix::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorKind::UnknownColumn, "predictor matrix has no column '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

int PredictorMatrix::at(const std::string& row, const std::string& col) const {
  return (*this)(index_of(row), index_of(col));
}

void PredictorMatrix::set(const std::string& row, const std::string& col, int code) {
  codes_(static_cast<Eigen::Index>(index_of(row)), static_cast<Eigen::Index>(index_of(col))) = code;
}

void PredictorMatrix::set_column(const std::string& col, int code) {
  const auto c = static_cast<Eigen::Index>(index_of(col));
  for (Eigen::Index r = 0; r < codes_.rows(); ++r) {
    if (r != c) codes_(r, c) = code;
  }
}

void PredictorMatrix::validate() const {
  for (Eigen::Index r = 0; r < codes_.rows(); ++r) {
    if (codes_(r, r) != 0) {
      throw Error(ErrorKind::InvalidSpec, "predictor matrix diagonal must be 0 ('" + names_[static_cast<std::size_t>(r)] + "')");
    }
    int groups = 0;
    for (Eigen::Index c = 0; c < codes_.cols(); ++c) {
      const int v = codes_(r, c);
      if (v != 0 && v != 1 && v != 2 && v != 3 && v != -2) {
        throw Error(ErrorKind::InvalidSpec, "unknown predictor code " + std::to_string(v));
      }
      if (v == -2) ++groups;
    }
    if (groups > 1) {
      throw Error(ErrorKind::InvalidSpec, "more than one cluster variable for '" + names_[static_cast<std::size_t>(r)] + "'");
    }
  }
}

WorkingData::WorkingData(const Dataset& d) : original_(d) {
  values_.resize(d.n_cols());
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    auto v = d.values(c);
    values_[c].assign(v.begin(), v.end());
  }
}

Dataset WorkingData::completed() const {
  std::vector<Mask> masks(values_.size());
  for (std::size_t c = 0; c < values_.size(); ++c) masks[c].assign(original_.n_rows(), 0);
  return original_.with_cells(values_, std::move(masks));
}

TargetDesign build_target_design(const WorkingData& w, std::size_t target, const PredictorMatrix& pred,
                                 bool multilevel) {
  const Dataset& d = w.original();
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  const std::size_t prow = pred.index_of(d.column(target).name);
  std::vector<int> codes(d.n_cols(), 0);
  TargetDesign td;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    if (c == target) continue;
    codes[c] = pred(prow, pred.index_of(d.column(c).name));
    if (codes[c] == -2) td.group_column = c;
  }
  std::vector<int> groups;
  int n_groups = 0;
  if (td.group_column) groups = group_index(d, *td.group_column, &n_groups);

  std::vector<Eigen::VectorXd> xcols{Eigen::VectorXd::Ones(n)};
  std::vector<Eigen::VectorXd> zcols{Eigen::VectorXd::Ones(n)};
  td.names = {"(Intercept)"};
  std::vector<std::pair<Eigen::VectorXd, std::string>> means;
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    const int code = codes[c];
    if (code == 0 || code == -2) continue;
    const auto& spec = d.column(c);
    const auto& v = w.column(c);
    std::vector<std::pair<Eigen::VectorXd, std::string>> block;
    if (spec.kind == Kind::Categorical) {
      for (std::size_t l = 1; l < spec.levels.size(); ++l) {
        Eigen::VectorXd col(n);
        for (Eigen::Index r = 0; r < n; ++r) col[r] = v[static_cast<std::size_t>(r)] == static_cast<double>(l) ? 1.0 : 0.0;
        block.emplace_back(std::move(col), spec.name + spec.levels[l]);
      }
    } else {
      block.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), n), spec.name);
    }
    for (auto& [col, name] : block) {
      if (multilevel && code == 2) zcols.push_back(col);
      if (multilevel && code == 3) {
        if (!td.group_column) {
          throw Error(ErrorKind::InvalidSpec, "cluster means for '" + d.column(target).name + "' need a cluster variable (-2)");
        }
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_groups), cnt = Eigen::VectorXd::Zero(n_groups);
        for (Eigen::Index r = 0; r < n; ++r) {
          sum[groups[static_cast<std::size_t>(r)]] += col[r];
          cnt[groups[static_cast<std::size_t>(r)]] += 1;
        }
        Eigen::VectorXd m(n);
        for (Eigen::Index r = 0; r < n; ++r) {
          const int g = groups[static_cast<std::size_t>(r)];
          m[r] = sum[g] / cnt[g];
        }
        means.emplace_back(std::move(m), "mean(" + name + ")");
      }
      xcols.push_back(col);
      td.names.push_back(name);
    }
  }
  for (auto& [col, name] : means) {
    xcols.push_back(std::move(col));
    td.names.push_back(name);
  }
  td.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t j = 0; j < xcols.size(); ++j) td.x.col(static_cast<Eigen::Index>(j)) = xcols[j];
  if (multilevel) {
    td.z.resize(n, static_cast<Eigen::Index>(zcols.size()));
    for (std::size_t j = 0; j < zcols.size(); ++j) td.z.col(static_cast<Eigen::Index>(j)) = zcols[j];
  }
  return td;
}

std::vector<std::size_t> pmm_match(RngStream& rng, std::span<const double> donor_pred,
                                   std::span<const double> target_pred, int k) {
  const std::size_t nd = donor_pred.size();
  if (nd == 0) throw Error(ErrorKind::TooFewDonors, "no donors");
  const auto kk = static_cast<std::size_t>(std::clamp<int>(k, 1, static_cast<int>(nd)));
  std::vector<std::size_t> order(nd);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return donor_pred[a] < donor_pred[b]; });
  std::vector<double> sorted(nd);
  for (std::size_t i = 0; i < nd; ++i) sorted[i] = donor_pred[order[i]];
  std::vector<std::size_t> out;
  out.reserve(target_pred.size());
  std::vector<std::size_t> near;
  for (double t : target_pred) {
    auto pos = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    std::size_t lo = pos, hi = pos;  // window [lo, hi)
    near.clear();
    while (near.size() < kk) {
      const bool can_lo = lo > 0;
      const bool can_hi = hi < nd;
      if (can_lo && (!can_hi || t - sorted[lo - 1] <= sorted[hi] - t)) {
        near.push_back(order[--lo]);
      } else {
        near.push_back(order[hi++]);
      }
    }
    out.push_back(near[rng.index(near.size())]);
  }
  return out;
}

void impute_univariate(RngStream& rng, UniMethod method, std::size_t target, const PredictorMatrix& pred,
                       const LevelsSpec& levels, WorkingData& w, SamplerCache& cache,
                       const UnivariateOptions& options, std::vector<std::string>* warnings) {
  if (method == UniMethod::None) return;
  const Dataset& d = w.original();
  const ColumnSpec& spec = d.column(target);
  require_kind(method, spec);
  const Split rows = split_rows(w.missing(target));
  if (rows.mis.empty()) return;
  if (rows.obs.empty()) throw Error(ErrorKind::InvalidSpec, "column '" + spec.name + "' has no observed values");
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(w.column(target).data(), n);
  auto& col = w.column(target);

  switch (method) {
    case UniMethod::Norm:
    case UniMethod::Logreg:
    case UniMethod::Polr:
    case UniMethod::Pmm: {
      TargetDesign td = build_target_design(w, target, pred, false);
      auto out = impute_single(rng, method, td.x, y, rows, spec, td.names, options, warnings);
      for (std::size_t i = 0; i < rows.mis.size(); ++i) col[static_cast<std::size_t>(rows.mis[i])] = out[static_cast<Eigen::Index>(i)];
      return;
    }
    case UniMethod::Pan2l:
    case UniMethod::Latent2l:
    case UniMethod::Pmm2l: {
      TargetDesign td = build_target_design(w, target, pred, true);
      if (!td.group_column) {
        throw Error(ErrorKind::InvalidSpec, "method " + to_string(method) + " for '" + spec.name + "' needs a cluster variable (-2)");
      }
      GibbsDesign gd;
      gd.x = drop_collinear(td.x, rows.obs, td.names, spec.name, warnings);
      RandomLevel lv;
      lv.group = group_index(d, *td.group_column, &lv.n_groups);
      lv.z = td.z;
      gd.levels.push_back(std::move(lv));
      auto out = impute_gibbs(rng, method, target, gd, y, rows, spec, cache, options, warnings);
      for (std::size_t i = 0; i < rows.mis.size(); ++i) col[static_cast<std::size_t>(rows.mis[i])] = out[static_cast<Eigen::Index>(i)];
      return;
    }
    case UniMethod::Only2lNorm:
    case UniMethod::Only2lPmm: {
      TargetDesign td = build_target_design(w, target, pred, false);
      if (!td.group_column) {
        throw Error(ErrorKind::InvalidSpec, "method " + to_string(method) + " for '" + spec.name + "' needs a cluster variable (-2)");
      }
      const Units u = make_units(d, *td.group_column);
      const Eigen::MatrixXd xu = unit_means(td.x, u);
      const UnitTarget t = unit_target(w, target, u);
      const Split us = split_rows(t.missing);
      if (us.obs.empty()) throw Error(ErrorKind::InvalidSpec, "column '" + spec.name + "' has no observed clusters");
      Eigen::VectorXd values = t.y;
      if (!us.mis.empty()) {
        auto out = impute_single(rng, method, xu, t.y, us, spec, td.names, options, warnings);
        for (std::size_t i = 0; i < us.mis.size(); ++i) values[us.mis[i]] = out[static_cast<Eigen::Index>(i)];
      }
      broadcast(w, target, u, values);
      return;
    }
    case UniMethod::MlLmerContinuous:
    case UniMethod::MlLmerPmm: {
      auto it = levels.find(spec.name);
      if (it == levels.end() || (it->second.level.empty() && it->second.clusters.empty())) {
        throw Error(ErrorKind::InvalidSpec, "method " + to_string(method) + " for '" + spec.name + "' needs its cluster levels");
      }
      const VariableLevel& vl = it->second;
      TargetDesign td = build_target_design(w, target, pred, false);
      if (vl.level.empty()) {
        GibbsDesign gd;
        gd.x = drop_collinear(td.x, rows.obs, td.names, spec.name, warnings);
        for (const auto& cname : vl.clusters) {
          RandomLevel lv;
          lv.group = group_index(d, d.index_of(cname), &lv.n_groups);
          lv.z = Eigen::MatrixXd::Ones(n, 1);
          gd.levels.push_back(std::move(lv));
        }
        auto out = impute_gibbs(rng, method, target, gd, y, rows, spec, cache, options, warnings);
        for (std::size_t i = 0; i < rows.mis.size(); ++i) col[static_cast<std::size_t>(rows.mis[i])] = out[static_cast<Eigen::Index>(i)];
        return;
      }
      const Units u = make_units(d, d.index_of(vl.level));
      const Eigen::MatrixXd xu = unit_means(td.x, u);
      const UnitTarget t = unit_target(w, target, u);
      const Split us = split_rows(t.missing);
      if (us.obs.empty()) throw Error(ErrorKind::InvalidSpec, "column '" + spec.name + "' has no observed units");
      GibbsDesign gd;
      gd.x = drop_collinear(xu, us.obs, td.names, spec.name, warnings);
      for (const auto& cname : vl.clusters) {
        const auto rows_group = group_index(d, d.index_of(cname));
        RandomLevel lv;
        std::vector<int> remap;
        lv.group.resize(static_cast<std::size_t>(u.n));
        for (int g = 0; g < u.n; ++g) {
          const int raw = rows_group[static_cast<std::size_t>(u.rows[static_cast<std::size_t>(g)].front())];
          if (raw >= static_cast<int>(remap.size())) remap.resize(static_cast<std::size_t>(raw) + 1, -1);
          if (remap[static_cast<std::size_t>(raw)] < 0) remap[static_cast<std::size_t>(raw)] = lv.n_groups++;
          lv.group[static_cast<std::size_t>(g)] = remap[static_cast<std::size_t>(raw)];
        }
        lv.z = Eigen::MatrixXd::Ones(u.n, 1);
        gd.levels.push_back(std::move(lv));
      }
      Eigen::VectorXd values = t.y;
      if (!us.mis.empty() && gd.levels.empty()) {
        // Top level: no enclosing clusters, so a single-level model on the units.
        const UniMethod single = method == UniMethod::MlLmerPmm ? UniMethod::Pmm : UniMethod::Norm;
        auto out = impute_single(rng, single, xu, t.y, us, spec, td.names, options, warnings);
        for (std::size_t i = 0; i < us.mis.size(); ++i) values[us.mis[i]] = out[static_cast<Eigen::Index>(i)];
      } else if (!us.mis.empty()) {
        auto out = impute_gibbs(rng, method, target, gd, t.y, us, spec, cache, options, warnings);
        for (std::size_t i = 0; i < us.mis.size(); ++i) values[us.mis[i]] = out[static_cast<Eigen::Index>(i)];
      }
      broadcast(w, target, u, values);
      return;
    }
    case UniMethod::None:
      return;
  }
}

}  // namespace longimp
