#ifndef LINKEDMF_RNG_HPP
#define LINKEDMF_RNG_HPP

#include "linkedmf/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace linkedmf {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

/// Seed of stream `stream` under master seed `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Seeded generator with platform-independent output.
///
/// Bits come from std::mt19937_64, whose sequence is fixed by the standard.
/// Uniforms take the top 53 bits; normals use the Marsaglia polar method.
/// Standard library distributions are avoided because their algorithms are
/// implementation defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t bits() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double normal();
  /// exp of a uniform draw on [log lo, log hi].
  double log_uniform(double lo, double hi);
  /// Uniform integer on [0, n).
  Index below(Index n);

  /// Column-major fill with standard normals.
  Matrix normal_matrix(Index rows, Index cols);
  /// `k` distinct values from [0, n), sorted ascending.
  std::vector<Index> sample(Index n, Index k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace linkedmf

#endif  // LINKEDMF_RNG_HPP
