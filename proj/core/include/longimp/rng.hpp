#pragma once

#include <cstdint>
#include <random>

namespace longimp {

/// A seeded stream of random draws. Streams with the same (seed, stream_id)
/// produce identical sequences; each imputation chain uses stream_id = its
/// chain index so that one user seed covers every chain.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  double uniform();                 // (0, 1)
  double normal();                  // N(0, 1)
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape);       // scale 1
  double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }
  double exponential(double rate);
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Derives an independent child stream (used by samplers that need a
  /// private stream per column or per sub-chain).
  RngStream split(std::uint64_t child_id) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace longimp
