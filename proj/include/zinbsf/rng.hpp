#pragma once

#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace zinbsf {

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based generator: the output stream is a pure function of
/// (key, counter), and keys are derived from (seed, stream ids). Two
/// generators built from the same ids produce the same sequence no matter
/// what else has been drawn elsewhere, which is what keeps a chain's sample
/// path independent of threading.
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) noexcept
      : key_(detail::splitmix_finalize(seed + detail::kGolden)) {}

  /// Stream keyed by (seed, a, b), e.g. (seed, iteration, block).
  static CounterRng stream(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0) noexcept {
    CounterRng rng(seed);
    rng.key_ = detail::splitmix_finalize(rng.key_ ^ (a * 0xd1b54a32d192ed03ULL + 1));
    rng.key_ = detail::splitmix_finalize(rng.key_ ^ (b * 0xabc98388fb8fac03ULL + 7));
    return rng;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    ++counter_;
    return detail::splitmix_finalize(key_ + counter_ * detail::kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(*this); }

  std::uint64_t key() const noexcept { return key_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Seed for the c-th chain/replicate derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return detail::splitmix_finalize(base ^ detail::splitmix_finalize(index + 0x5851f42d4c957f2dULL));
}

} // namespace zinbsf
