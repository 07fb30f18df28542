#include "longimp/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "longimp/error.hpp"
#include "longimp/regression.hpp"

namespace longimp {

std::string to_string(Criterion c) { return c == Criterion::ML ? "ML" : "REML"; }

Criterion criterion_from_string(const std::string& text) {
  if (text == "ML" || text == "ml") return Criterion::ML;
  if (text == "REML" || text == "reml") return Criterion::REML;
  throw Error(ErrorKind::BadConfig, "unknown criterion '" + text + "'");
}

namespace {

constexpr int kRefineIter = 500;
constexpr int kNewtonIter = 50;

// Sufficient statistics of a nested random-intercept model. With H = V /
// sigma^2 the per-cluster inverse is two Sherman-Morrison updates, so every
// quantity needs only per-group sums of [X y].
struct Problem {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  int levels = 1;
  Eigen::MatrixXd w;                     // [X y]'[X y]
  std::vector<Eigen::VectorXd> s;        // per inner group sums of [X y]
  std::vector<double> size;              // inner group sizes
  std::vector<std::vector<int>> outer;   // inner groups of each outer group
  std::vector<std::string> names;
  std::vector<std::string> warnings;
  std::vector<std::size_t> n_groups;
};

Problem prepare(const ModelFormula& f, const Dataset& d) {
  if (f.groups.empty() || f.groups.size() > 2) {
    throw Error(ErrorKind::InvalidSpec, "fit_lmm supports one or two nested random intercepts");
  }
  Design des = build_design(f, d);
  Problem pr;
  auto keep = independent_columns(des.x);
  if (static_cast<Eigen::Index>(keep.size()) < des.x.cols()) {
    std::string dropped;
    std::vector<bool> kept(static_cast<std::size_t>(des.x.cols()), false);
    for (auto k : keep) kept[static_cast<std::size_t>(k)] = true;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (!kept[j]) dropped += (dropped.empty() ? "" : ", ") + des.names[j];
    }
    pr.warnings.push_back("fixed-effect model matrix is rank deficient; dropping " + dropped);
    Eigen::MatrixXd xk(des.x.rows(), static_cast<Eigen::Index>(keep.size()));
    std::vector<std::string> nk;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      xk.col(static_cast<Eigen::Index>(j)) = des.x.col(keep[j]);
      nk.push_back(des.names[static_cast<std::size_t>(keep[j])]);
    }
    des.x = std::move(xk);
    des.names = std::move(nk);
  }
  pr.n = des.x.rows();
  pr.p = des.x.cols();
  if (pr.n <= pr.p) throw Error(ErrorKind::RankDeficient, "fewer observations than fixed effects");
  pr.names = des.names;
  pr.levels = static_cast<int>(f.groups.size());
  Eigen::MatrixXd xy(pr.n, pr.p + 1);
  xy << des.x, des.y;
  pr.w = xy.transpose() * xy;

  const auto inner_col = d.values(d.index_of(f.groups.back()));
  std::span<const double> outer_col;
  if (pr.levels == 2) outer_col = d.values(d.index_of(f.groups.front()));
  std::map<std::pair<double, double>, int> inner_ids;
  std::map<double, int> outer_ids;
  std::vector<int> inner_to_outer;
  for (Eigen::Index r = 0; r < pr.n; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    const double o = pr.levels == 2 ? outer_col[ur] : 0.0;
    auto [it, fresh] = inner_ids.try_emplace({o, inner_col[ur]}, static_cast<int>(pr.s.size()));
    if (fresh) {
      pr.s.push_back(Eigen::VectorXd::Zero(pr.p + 1));
      pr.size.push_back(0);
      auto [ot, ofresh] = outer_ids.try_emplace(o, static_cast<int>(pr.outer.size()));
      if (ofresh) pr.outer.emplace_back();
      pr.outer[static_cast<std::size_t>(ot->second)].push_back(it->second);
    }
    const auto g = static_cast<std::size_t>(it->second);
    pr.s[g] += xy.row(r).transpose();
    pr.size[g] += 1;
  }
  if (pr.levels == 2) pr.n_groups.push_back(pr.outer.size());
  pr.n_groups.push_back(pr.s.size());
  return pr;
}

struct Eval {
  double dev = 0;
  Eigen::VectorXd grad;  // d dev / d gamma, outermost first
  Eigen::VectorXd beta;
  Eigen::MatrixXd mxx_inv;
  double r = 0;
};

// gamma = (gamma_outer, gamma_inner) for two levels, (gamma_inner) for one.
Eval evaluate(const Problem& pr, Criterion crit, const Eigen::VectorXd& gamma, bool derivs) {
  const double g1 = pr.levels == 2 ? gamma[0] : 0.0;
  const double g2 = gamma[pr.levels - 1];
  const Eigen::Index p = pr.p;
  const std::size_t ng = pr.s.size();

  Eigen::MatrixXd m = pr.w;
  double logdet_h = 0;
  std::vector<double> dg(ng);
  for (std::size_t g = 0; g < ng; ++g) {
    dg[g] = 1.0 + g2 * pr.size[g];
    logdet_h += std::log(dg[g]);
    m.selfadjointView<Eigen::Lower>().rankUpdate(pr.s[g], -g2 / dg[g]);
  }
  const std::size_t no = pr.outer.size();
  std::vector<Eigen::VectorXd> t(no), dt(no);
  std::vector<double> c(no), dc(no), e(no);
  if (pr.levels == 2) {
    for (std::size_t o = 0; o < no; ++o) {
      t[o] = Eigen::VectorXd::Zero(p + 1);
      dt[o] = Eigen::VectorXd::Zero(p + 1);
      c[o] = 0;
      dc[o] = 0;
      for (int gi : pr.outer[o]) {
        const auto g = static_cast<std::size_t>(gi);
        t[o] += pr.s[g] / dg[g];
        dt[o] -= pr.size[g] * pr.s[g] / (dg[g] * dg[g]);
        c[o] += pr.size[g] / dg[g];
        dc[o] -= pr.size[g] * pr.size[g] / (dg[g] * dg[g]);
      }
      e[o] = 1.0 + g1 * c[o];
      logdet_h += std::log(e[o]);
      m.selfadjointView<Eigen::Lower>().rankUpdate(t[o], -g1 / e[o]);
    }
  }
  m = m.selfadjointView<Eigen::Lower>();

  Eval out;
  const Eigen::MatrixXd mxx = m.topLeftCorner(p, p);
  Eigen::LLT<Eigen::MatrixXd> llt(mxx);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularFit, "X'H^-1X is singular");
  out.beta = llt.solve(m.col(p).head(p));
  out.r = std::max(m(p, p) - m.col(p).head(p).dot(out.beta), 1e-300);
  const double n = static_cast<double>(pr.n);
  const double two_pi = 2.0 * std::numbers::pi;
  double logdet_mxx = 0;
  for (Eigen::Index i = 0; i < p; ++i) logdet_mxx += 2.0 * std::log(llt.matrixL()(i, i));
  const double dof = crit == Criterion::REML ? n - static_cast<double>(p) : n;
  out.dev = logdet_h + dof * (1.0 + std::log(two_pi * out.r / dof));
  if (crit == Criterion::REML) out.dev += logdet_mxx;
  out.mxx_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  if (!derivs) return out;

  Eigen::VectorXd v(p + 1);
  v << -out.beta, 1.0;
  // Each rank-one term u u' of dM contributes (v'u)^2 to dr and
  // u_x' Mxx^-1 u_x to d log|Mxx|.
  auto quad = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return v.dot(a) * v.dot(b); };
  auto trace = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.head(p).dot(out.mxx_inv * b.head(p));
  };
  const bool reml = crit == Criterion::REML;
  out.grad = Eigen::VectorXd::Zero(pr.levels);
  {
    double dlog = 0, dr = 0, dtr = 0;
    for (std::size_t g = 0; g < ng; ++g) {
      const double a = 1.0 / (dg[g] * dg[g]);
      dlog += pr.size[g] / dg[g];
      dr -= a * quad(pr.s[g], pr.s[g]);
      if (reml) dtr -= a * trace(pr.s[g], pr.s[g]);
    }
    if (pr.levels == 2) {
      for (std::size_t o = 0; o < no; ++o) {
        const double b = g1 / e[o];
        const double db = -g1 * g1 * dc[o] / (e[o] * e[o]);
        dlog += g1 * dc[o] / e[o];
        dr -= db * quad(t[o], t[o]) + 2.0 * b * quad(dt[o], t[o]);
        if (reml) dtr -= db * trace(t[o], t[o]) + 2.0 * b * trace(dt[o], t[o]);
      }
    }
    out.grad[pr.levels - 1] = dlog + dtr + dof * dr / out.r;
  }
  if (pr.levels == 2) {
    double dlog = 0, dr = 0, dtr = 0;
    for (std::size_t o = 0; o < no; ++o) {
      const double a = 1.0 / (e[o] * e[o]);
      dlog += c[o] / e[o];
      dr -= a * quad(t[o], t[o]);
      if (reml) dtr -= a * trace(t[o], t[o]);
    }
    out.grad[0] = dlog + dtr + dof * dr / out.r;
  }
  return out;
}

struct Optimum {
  Eigen::VectorXd gamma;
  bool converged = false;
  int iterations = 0;
};

double scaled_grad(const Eigen::VectorXd& g, const Eigen::VectorXd& gamma) {
  double worst = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (gamma[i] == 0.0 && g[i] >= 0.0) continue;  // held at the boundary
    worst = std::max(worst, std::abs(g[i]) * std::max(gamma[i], 1e-3));
  }
  return worst;
}

Optimum optimize(const Problem& pr, Criterion crit) {
  const int k = pr.levels;
  const std::vector<double> grid{0.0, 1e-3, 1e-2, 0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0};
  Optimum opt;
  opt.gamma = Eigen::VectorXd::Zero(k);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd trial(k);
  const std::size_t total = k == 2 ? grid.size() * grid.size() : grid.size();
  for (std::size_t idx = 0; idx < total; ++idx) {
    trial[0] = grid[idx % grid.size()];
    if (k == 2) trial[1] = grid[idx / grid.size()];
    const double dev = evaluate(pr, crit, trial, false).dev;
    if (dev < best) {
      best = dev;
      opt.gamma = trial;
    }
  }

  auto dev_at = [&](const Eigen::VectorXd& g) { return evaluate(pr, crit, g, false).dev; };
  Eval cur = evaluate(pr, crit, opt.gamma, true);
  constexpr double kTol = 1e-9;
  int newton_used = 0;
  for (int it = 0; it < kRefineIter + kNewtonIter; ++it) {
    opt.iterations = it + 1;
    if (scaled_grad(cur.grad, opt.gamma) < kTol) {
      opt.converged = true;
      break;
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (!(opt.gamma[i] == 0.0 && cur.grad[i] >= 0.0)) free.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd step = Eigen::VectorXd::Zero(k);
    // Finite-difference Hessian of the analytic gradient.
    Eigen::MatrixXd hess(nf, nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index i = free[static_cast<std::size_t>(a)];
      const double h = 1e-6 * std::max(opt.gamma[i], 1e-3);
      Eigen::VectorXd up = opt.gamma, dn = opt.gamma;
      up[i] += h;
      double span = h;
      if (opt.gamma[i] >= h) {
        dn[i] -= h;
        span = 2 * h;
      }
      Eigen::VectorXd gu = evaluate(pr, crit, up, true).grad;
      Eigen::VectorXd gd = opt.gamma[i] >= h ? evaluate(pr, crit, dn, true).grad : cur.grad;
      for (Eigen::Index b = 0; b < nf; ++b) hess(b, a) = (gu[free[static_cast<std::size_t>(b)]] - gd[free[static_cast<std::size_t>(b)]]) / span;
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) gf[a] = cur.grad[free[static_cast<std::size_t>(a)]];
    // The first kRefineIter steps may be damped; the final ones are plain Newton.
    Eigen::VectorXd sf;
    double lambda = 0;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::MatrixXd hm = hess;
      for (Eigen::Index a = 0; a < nf; ++a) hm(a, a) += lambda * (std::abs(hess(a, a)) + 1.0);
      Eigen::LLT<Eigen::MatrixXd> llt(hm);
      if (llt.info() == Eigen::Success) {
        sf = -llt.solve(gf);
        break;
      }
      lambda = lambda == 0 ? 1e-6 : lambda * 10;
    }
    if (sf.size() == 0) break;
    if (lambda == 0) ++newton_used;
    for (Eigen::Index a = 0; a < nf; ++a) step[free[static_cast<std::size_t>(a)]] = sf[a];

    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 50; ++h, t *= 0.5) {
      Eigen::VectorXd next = (opt.gamma + t * step).cwiseMax(0.0);
      const double d = dev_at(next);
      if (d <= cur.dev) {
        moved = (next - opt.gamma).cwiseAbs().maxCoeff() > 0;
        opt.gamma = next;
        break;
      }
    }
    if (!moved) {
      // Stalled at machine precision: accept when the expected deviance gain is negligible.
      opt.converged = scaled_grad(cur.grad, opt.gamma) < 1e-5 || (lambda == 0 && std::abs(gf.dot(sf)) < 1e-6);
      break;
    }
    cur = evaluate(pr, crit, opt.gamma, true);
    if (newton_used >= kNewtonIter) break;
  }
  if (!opt.converged && scaled_grad(cur.grad, opt.gamma) < kTol) opt.converged = true;
  return opt;
}

Eigen::VectorXd to_gamma(const Problem& pr, const std::vector<double>& gamma) {
  if (static_cast<int>(gamma.size()) != pr.levels) {
    throw Error(ErrorKind::InvalidSpec, "expected one variance ratio per grouping factor");
  }
  return Eigen::Map<const Eigen::VectorXd>(gamma.data(), pr.levels);
}

}  // namespace

double lmm_profiled_deviance(const ModelFormula& formula, const Dataset& d, Criterion criterion,
                             const std::vector<double>& gamma) {
  Problem pr = prepare(formula, d);
  return evaluate(pr, criterion, to_gamma(pr, gamma), false).dev;
}

double lmm_deviance_at(const ModelFormula& formula, const Dataset& d, Criterion criterion,
                       const std::vector<double>& variances) {
  Problem pr = prepare(formula, d);
  if (static_cast<int>(variances.size()) != pr.levels + 1 || !(variances.back() > 0)) {
    throw Error(ErrorKind::InvalidSpec, "expected random-intercept variances then a positive residual");
  }
  const double s2 = variances.back();
  std::vector<double> gamma;
  for (int k = 0; k < pr.levels; ++k) gamma.push_back(variances[static_cast<std::size_t>(k)] / s2);
  Eval ev = evaluate(pr, criterion, to_gamma(pr, gamma), false);
  const double n = static_cast<double>(pr.n);
  const double dof = criterion == Criterion::REML ? n - static_cast<double>(pr.p) : n;
  // Undo the sigma^2 profiling: dev(s2) = dev_min - dof (1 + log(r/dof)) + dof log s2 + r / s2.
  return ev.dev - dof * (1.0 + std::log(ev.r / dof)) + dof * std::log(s2) + ev.r / s2;
}

LmmFit fit_lmm(const ModelFormula& formula, const Dataset& d, Criterion criterion) {
  Problem pr = prepare(formula, d);
  Optimum opt = optimize(pr, criterion);
  Eval ev = evaluate(pr, criterion, opt.gamma, false);
  const double n = static_cast<double>(pr.n);
  const double dof = criterion == Criterion::REML ? n - static_cast<double>(pr.p) : n;
  const double s2 = ev.r / dof;

  LmmFit fit;
  fit.formula = formula.to_string();
  fit.criterion = criterion;
  fit.names = pr.names;
  fit.beta = ev.beta;
  fit.cov = s2 * ev.mxx_inv;
  fit.se = fit.cov.diagonal().cwiseSqrt();
  for (int k = 0; k < pr.levels; ++k) {
    VarianceComponent vc;
    vc.group = formula.groups[static_cast<std::size_t>(k)];
    vc.variance = opt.gamma[k] * s2;
    vc.sd = std::sqrt(vc.variance);
    vc.boundary = opt.gamma[k] == 0.0;
    fit.components.push_back(vc);
  }
  fit.components.push_back({"Residual", s2, std::sqrt(s2), false});
  fit.deviance = ev.dev;
  fit.loglik = -0.5 * ev.dev;
  fit.n_obs = static_cast<std::size_t>(pr.n);
  fit.n_groups = pr.n_groups;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.warnings = pr.warnings;
  if (!opt.converged) fit.warnings.push_back("variance-component optimizer did not converge");
  for (const auto& vc : fit.components) {
    if (vc.boundary) fit.warnings.push_back("boundary fit: variance of '" + vc.group + "' is 0");
  }
  return fit;
}

nlohmann::json to_json(const LmmFit& fit) {
  nlohmann::json j;
  j["formula"] = fit.formula;
  j["criterion"] = to_string(fit.criterion);
  j["n_obs"] = fit.n_obs;
  j["n_groups"] = fit.n_groups;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["loglik"] = fit.loglik;
  j["deviance"] = fit.deviance;
  auto& coefs = j["coefficients"] = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    coefs.push_back({{"name", fit.names[i]}, {"estimate", fit.beta[e]}, {"se", fit.se[e]}});
  }
  auto& vcs = j["variance_components"] = nlohmann::json::array();
  for (const auto& vc : fit.components) {
    vcs.push_back({{"group", vc.group}, {"variance", vc.variance}, {"sd", vc.sd}, {"boundary", vc.boundary}});
  }
  j["warnings"] = fit.warnings;
  return j;
}

LmmFit lmm_fit_from_json(const nlohmann::json& j) {
  try {
    LmmFit fit;
    fit.formula = j.value("formula", "");
    fit.criterion = criterion_from_string(j.value("criterion", "REML"));
    fit.n_obs = j.value("n_obs", std::size_t{0});
    fit.n_groups = j.value("n_groups", std::vector<std::size_t>{});
    fit.converged = j.value("converged", true);
    fit.iterations = j.value("iterations", 0);
    fit.loglik = j.value("loglik", 0.0);
    fit.deviance = j.value("deviance", 0.0);
    const auto& coefs = j.at("coefficients");
    fit.beta.resize(static_cast<Eigen::Index>(coefs.size()));
    fit.se.resize(fit.beta.size());
    for (std::size_t i = 0; i < coefs.size(); ++i) {
      fit.names.push_back(coefs[i].at("name").get<std::string>());
      fit.beta[static_cast<Eigen::Index>(i)] = coefs[i].at("estimate").get<double>();
      fit.se[static_cast<Eigen::Index>(i)] = coefs[i].at("se").get<double>();
    }
    fit.cov = fit.se.cwiseAbs2().asDiagonal();
    for (const auto& vc : j.value("variance_components", nlohmann::json::array())) {
      fit.components.push_back({vc.at("group").get<std::string>(), vc.at("variance").get<double>(),
                                vc.at("sd").get<double>(), vc.value("boundary", false)});
    }
    fit.warnings = j.value("warnings", std::vector<std::string>{});
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("malformed fit JSON: ") + e.what());
  }
}

}  // namespace longimp
