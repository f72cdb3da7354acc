#pragma once

#include <cstdint>

#include "scm/tensor.hpp"

namespace scm {

// SplitMix64 generator. Normals come from Box-Muller on 53-bit uniforms, two
// per pair of raw draws, emitted cos-branch first.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double normal() noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// I.i.d. standard normals, filled in row-major order.
Tensor randn(Rng& rng, const Shape& shape);

/// Uniform in [lo, hi), row-major.
Tensor rand_uniform(Rng& rng, const Shape& shape, double lo, double hi);

}  // namespace scm
