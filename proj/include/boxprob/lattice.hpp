#pragma once

// Randomly shifted, extensible rank-1 lattice rule in base 2.
//
// Point k of the sequence is frac(phi_2(k) * z + shift) with phi_2 the
// van der Corput radical inverse, so every prefix of 2^m points is the
// full lattice {frac(j z / 2^m + shift)}. Doubling the point count reuses
// all previous points. The baker's (tent) transform is applied on top.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "boxprob/detail/lattice_vector.hpp"

namespace boxprob {

inline std::uint32_t reverse_bits32(std::uint32_t v) {
  v = ((v >> 1) & 0x55555555u) | ((v & 0x55555555u) << 1);
  v = ((v >> 2) & 0x33333333u) | ((v & 0x33333333u) << 2);
  v = ((v >> 4) & 0x0F0F0F0Fu) | ((v & 0x0F0F0F0Fu) << 4);
  v = ((v >> 8) & 0x00FF00FFu) | ((v & 0x00FF00FFu) << 8);
  return (v >> 16) | (v << 16);
}

/// Deterministic stream of 64-bit values (splitmix64).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }

 private:
  std::uint64_t state_;
};

class ShiftedLattice {
 public:
  ShiftedLattice(std::size_t dims, std::size_t n_shifts, std::uint64_t seed)
      : dims_(dims), generator_(dims), shifts_(dims * n_shifts) {
    for (std::size_t j = 0; j < dims; ++j) {
      if (j < detail::kLatticeGenerator.size()) {
        generator_[j] = detail::kLatticeGenerator[j];
      } else {
        SplitMix64 extra(0x5deece66dULL + j);
        generator_[j] = static_cast<std::uint32_t>(extra.next()) | 1u;
      }
    }
    SplitMix64 rng(seed);
    for (double& s : shifts_) s = rng.uniform();
  }

  std::size_t dims() const { return dims_; }
  std::size_t n_shifts() const { return shifts_.size() / (dims_ == 0 ? 1 : dims_); }

  /// Writes point `k` under shift `s` into `out` (size dims()), each
  /// coordinate in [0, 1].
  void point(std::uint32_t k, std::size_t s, double* out) const {
    const std::uint32_t r = reverse_bits32(k);
    const double* shift = shifts_.data() + s * dims_;
    for (std::size_t j = 0; j < dims_; ++j) {
      double x = static_cast<double>(static_cast<std::uint32_t>(r * generator_[j])) * 0x1p-32 + shift[j];
      if (x >= 1.0) x -= 1.0;
      x = 2.0 * x - 1.0;
      out[j] = x < 0.0 ? -x : x;
    }
  }

 private:
  std::size_t dims_;
  std::vector<std::uint32_t> generator_;
  std::vector<double> shifts_;
};

}  // namespace boxprob
