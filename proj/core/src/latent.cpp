#include "longimp/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "longimp/distributions.hpp"
#include "longimp/error.hpp"

namespace longimp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int decode_latent(std::span<const double> z) {
  const auto it = std::max_element(z.begin(), z.end());
  if (*it > 0.0) return static_cast<int>(it - z.begin());
  return static_cast<int>(z.size());
}

bool latent_in_region(int level, std::span<const double> z) { return decode_latent(z) == level; }

Interval latent_interval(int level, std::span<const double> z, std::size_t j) {
  const auto ref = static_cast<int>(z.size());
  if (level == ref) return {-kInf, 0.0};
  const auto l = static_cast<std::size_t>(level);
  if (j == l) {
    double lo = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k != l) lo = std::max(lo, z[k]);
    }
    return {lo, kInf};
  }
  return {-kInf, z[l]};
}

std::vector<double> sample_latent(RngStream& rng, int level, int n_levels) {
  const auto dims = static_cast<std::size_t>(n_levels - 1);
  std::vector<double> z(dims);
  if (level == n_levels - 1) {
    for (auto& v : z) v = trunc_normal_draw(rng, 0.0, 1.0, -kInf, 0.0);
    return z;
  }
  const auto l = static_cast<std::size_t>(level);
  z[l] = trunc_normal_draw(rng, 0.0, 1.0, 0.0, kInf);
  for (std::size_t k = 0; k < dims; ++k) {
    if (k != l) z[k] = trunc_normal_draw(rng, 0.0, 1.0, -kInf, z[l]);
  }
  return z;
}

LatentLayout make_layout(const Dataset& d, const std::vector<std::string>& columns,
                         bool latent_factors) {
  LatentLayout layout;
  for (const auto& name : columns) {
    const std::size_t c = d.index_of(name);
    const auto& spec = d.column(c);
    LatentBlock b{c, layout.width, 1, 0, false};
    if (spec.is_factor()) {
      b.n_levels = static_cast<int>(spec.levels.size());
      if (latent_factors) {
        b.latent = true;
        b.dims = b.n_levels - 1;
      }
    }
    if (b.latent) {
      for (int k = 0; k < b.dims; ++k) {
        layout.names.push_back(name + "~" + spec.levels[static_cast<std::size_t>(k)]);
      }
    } else {
      layout.names.push_back(name);
    }
    layout.width += b.dims;
    layout.blocks.push_back(b);
  }
  return layout;
}

LatentState encode_latent(RngStream& rng, const Dataset& d, const LatentLayout& layout) {
  const auto n = static_cast<Eigen::Index>(d.n_rows());
  LatentState st;
  st.z = Eigen::MatrixXd::Zero(n, layout.width);
  st.free.assign(static_cast<std::size_t>(layout.width), std::vector<std::uint8_t>(d.n_rows(), 0));
  for (const auto& b : layout.blocks) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      if (d.is_missing(ur, b.column)) {
        for (int k = 0; k < b.dims; ++k) st.free[static_cast<std::size_t>(b.first + k)][ur] = 1;
        continue;
      }
      const double v = d.value(ur, b.column);
      if (b.n_levels > 0 && (v < 0 || v >= b.n_levels || v != std::floor(v))) {
        throw Error(ErrorKind::UnknownLevel, "column '" + d.column(b.column).name +
                                                 "' holds an undeclared level");
      }
      if (!b.latent) {
        st.z(r, b.first) = v;
        continue;
      }
      auto z = sample_latent(rng, static_cast<int>(v), b.n_levels);
      for (int k = 0; k < b.dims; ++k) st.z(r, b.first + k) = z[static_cast<std::size_t>(k)];
    }
  }
  return st;
}

Dataset decode_latent(const Dataset& d, const LatentLayout& layout, const Eigen::MatrixXd& z) {
  std::vector<std::vector<double>> values(d.n_cols());
  std::vector<Mask> masks(d.n_cols());
  for (std::size_t c = 0; c < d.n_cols(); ++c) {
    auto v = d.values(c);
    auto m = d.mask(c);
    values[c].assign(v.begin(), v.end());
    masks[c].assign(m.begin(), m.end());
  }
  std::vector<double> buf;
  for (const auto& b : layout.blocks) {
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      if (!d.is_missing(r, b.column)) continue;
      const auto er = static_cast<Eigen::Index>(r);
      double out;
      if (b.latent) {
        buf.assign(static_cast<std::size_t>(b.dims), 0.0);
        for (int k = 0; k < b.dims; ++k) buf[static_cast<std::size_t>(k)] = z(er, b.first + k);
        out = decode_latent(buf);
      } else if (b.n_levels > 0) {
        out = std::clamp(std::round(z(er, b.first)), 0.0, static_cast<double>(b.n_levels - 1));
      } else {
        out = z(er, b.first);
      }
      values[b.column][r] = out;
      masks[b.column][r] = 0;
    }
  }
  return d.with_cells(std::move(values), std::move(masks));
}

double adaptive_threshold(double mean) {
  if (!(mean > 0.0 && mean < 1.0)) {
    throw Error(ErrorKind::DegenerateMean, "completed mean must lie strictly inside (0, 1)");
  }
  return mean - normal_quantile(mean) * std::sqrt(mean * (1.0 - mean));
}

std::vector<double> adaptive_round(std::span<const double> completed,
                                   std::span<const std::uint8_t> imputed) {
  double mean = 0;
  for (double v : completed) mean += v;
  mean /= static_cast<double>(completed.size());
  const double c = adaptive_threshold(mean);
  std::vector<double> out(completed.begin(), completed.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (imputed[i]) out[i] = out[i] > c ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace longimp
