#pragma once

#include <cmath>
#include <cstdint>

namespace boxprob::detail {

// Exact, order-independent accumulator for non-negative doubles: every term
// is truncated to a multiple of 2^-100 and summed in 128-bit fixed point.
// Adding terms can never decrease the total, and any grouping of partial
// sums yields the same bits.
class FixedSum {
 public:
  void add(double v) {
    if (!(v > 0.0)) return;
    acc_ += static_cast<unsigned __int128>(std::ldexp(v, kFracBits));
  }

  void add(const FixedSum& other) { acc_ += other.acc_; }

  double value() const {
    const auto hi = static_cast<std::uint64_t>(acc_ >> 64);
    const auto lo = static_cast<std::uint64_t>(acc_);
    return std::ldexp(std::ldexp(static_cast<double>(hi), 64) + static_cast<double>(lo), -kFracBits);
  }

 private:
  static constexpr int kFracBits = 100;
  unsigned __int128 acc_ = 0;
};

}  // namespace boxprob::detail
