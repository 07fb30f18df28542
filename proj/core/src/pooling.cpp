#include "longimp/pooling.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "longimp/error.hpp"
#include "longimp/io.hpp"
#include "longimp/simulator.hpp"

namespace longimp {

FitSummary summarize(const LmmFit& fit) {
  FitSummary s;
  s.names = fit.names;
  s.estimate = fit.beta;
  s.se = fit.se;
  s.converged = fit.converged;
  for (const auto& vc : fit.components) {
    s.extras.emplace_back("var(" + vc.group + ")", vc.variance);
    s.extras.emplace_back("sd(" + vc.group + ")", vc.sd);
  }
  return s;
}

FitSummary fit_summary_from_json(const nlohmann::json& j) {
  try {
    return summarize(lmm_fit_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("fit JSON: ") + e.what());
  }
}

PooledResult pool(std::span<const FitSummary> fits, bool exclude_nonconverged) {
  std::vector<const FitSummary*> use;
  PooledResult out;
  for (const auto& f : fits) {
    if (!f.converged) {
      ++out.n_nonconverged;
      if (exclude_nonconverged) {
        ++out.n_excluded;
        continue;
      }
    }
    use.push_back(&f);
  }
  const auto m = static_cast<int>(use.size());
  if (m < 2) throw Error(ErrorKind::TooFewImputations, "pooling needs at least 2 fits, got " + std::to_string(m));
  const FitSummary& first = *use.front();
  for (const auto* f : use) {
    if (f->names != first.names || f->estimate.size() != static_cast<Eigen::Index>(first.names.size()) ||
        f->se.size() != f->estimate.size()) {
      throw Error(ErrorKind::MisalignedParams, "fits have different parameter lists");
    }
    if (f->extras.size() != first.extras.size()) {
      throw Error(ErrorKind::MisalignedParams, "fits have different variance components");
    }
    for (std::size_t k = 0; k < f->extras.size(); ++k) {
      if (f->extras[k].first != first.extras[k].first) {
        throw Error(ErrorKind::MisalignedParams, "fits have different variance components");
      }
    }
  }
  out.m = m;
  const double md = m;
  for (std::size_t p = 0; p < first.names.size(); ++p) {
    const auto ip = static_cast<Eigen::Index>(p);
    PooledParam q;
    q.name = first.names[p];
    for (const auto* f : use) {
      q.estimate += f->estimate[ip];
      q.within += f->se[ip] * f->se[ip];
    }
    q.estimate /= md;
    q.within /= md;
    for (const auto* f : use) q.between += (f->estimate[ip] - q.estimate) * (f->estimate[ip] - q.estimate);
    q.between /= md - 1;
    const double inflated = (1 + 1 / md) * q.between;
    q.total = q.within + inflated;
    q.se = std::sqrt(q.total);
    if (q.between > 0) {
      const double r = 1 + q.within / inflated;
      q.df = (md - 1) * r * r;
    } else {
      q.df = std::numeric_limits<double>::infinity();
    }
    q.fmi = q.total > 0 ? inflated / q.total : 0.0;
    out.params.push_back(q);
  }
  for (std::size_t k = 0; k < first.extras.size(); ++k) {
    double sum = 0;
    for (const auto* f : use) sum += f->extras[k].second;
    out.extras.emplace_back(first.extras[k].first, sum / md);
  }
  return out;
}

nlohmann::json to_json(const PooledResult& result) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "Inf";
    return v;
  };
  nlohmann::json j;
  j["m"] = result.m;
  j["n_nonconverged"] = result.n_nonconverged;
  j["n_excluded"] = result.n_excluded;
  j["coefficients"] = nlohmann::json::array();
  for (const auto& q : result.params) {
    j["coefficients"].push_back({{"name", q.name},
                                 {"estimate", q.estimate},
                                 {"se", q.se},
                                 {"within", q.within},
                                 {"between", q.between},
                                 {"total", q.total},
                                 {"df", num(q.df)},
                                 {"fmi", q.fmi}});
  }
  j["variance_components"] = nlohmann::json::object();
  for (const auto& [name, value] : result.extras) j["variance_components"][name] = value;
  return j;
}

std::string pooled_csv(const PooledResult& result) {
  std::ostringstream os;
  os << "parameter,estimate,se,df,fmi\n";
  for (const auto& q : result.params) {
    os << '"' << q.name << "\"," << format_number(q.estimate) << ',' << format_number(q.se) << ','
       << format_number(q.df) << ',' << format_number(q.fmi) << '\n';
  }
  for (const auto& [name, value] : result.extras) os << '"' << name << "\"," << format_number(value) << ",NA,NA,NA\n";
  return os.str();
}

int imputation_count_rule(const Dataset& d, Shape shape, std::vector<std::string>* warnings) {
  const double f = incomplete_fraction(d, shape);
  int m = static_cast<int>(std::ceil(100.0 * f - 1e-9));
  if (m < 2) {
    if (warnings) warnings->push_back("incomplete fraction gives m = " + std::to_string(m) + "; using 2");
    m = 2;
  }
  return m;
}

}  // namespace longimp
