#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace tcal {

namespace detail {

// SplitMix64 finalizer (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kWeyl = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// Counter-based random stream keyed by (master_seed, stream_id).
///
/// The i-th output is a fixed function of (key, i), so a replication that owns
/// stream id r reproduces its draws regardless of which thread runs it or in
/// what order replications execute. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept
      : master_(master_seed),
        stream_(stream_id),
        key_(detail::mix64(detail::mix64(master_seed ^ 0x5851f42d4c957f2dULL) +
                           detail::mix64(stream_id * detail::kWeyl + 0x14057b7ef767814fULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kWeyl) ^
           detail::mix64(counter_ ^ (key_ >> 7));
  }

  std::uint64_t master_seed() const noexcept { return master_; }
  std::uint64_t stream_id() const noexcept { return stream_; }
  std::uint64_t position() const noexcept { return counter_; }

  /// Independent child stream for a sub-role (data generation, folds, ...).
  RngStream substream(std::uint64_t role) const noexcept {
    return RngStream(master_, detail::mix64(stream_ * detail::kWeyl ^ (role + 1)));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's nearly-divisionless method.
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = -bound % bound;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t master_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tcal
