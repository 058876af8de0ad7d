#pragma once

#include <cmath>
#include <cstdint>

namespace coco {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

// Stafford variant 13 finalizer, as used by SplitMix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based SplitMix64 stream. The n-th output is a pure function of
/// (key, n), so a stream is reproducible bit-for-bit from its seed and child
/// streams can be split off without touching the parent.
///
/// Gaussians use the Marsaglia polar method, which needs only log and sqrt
/// and therefore gives the same bits on every IEEE-754 platform with a
/// correctly rounded sqrt and the same libm.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) noexcept
      : seed_(seed), key_(detail::mix64(seed + detail::golden_gamma)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent child stream; does not advance this stream.
  RngStream split(std::uint64_t index) const noexcept {
    RngStream child(0);
    child.seed_ = seed_;
    child.key_ = detail::mix64(key_ ^ detail::mix64(index + 0x632be59bd9b4e019ULL));
    return child;
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::golden_gamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * next_unit() - 1.0;
      v = 2.0 * next_unit() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool operator==(const RngStream&) const = default;

private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace coco
