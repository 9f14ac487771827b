#pragma once

#include <cstdint>
#include <limits>

namespace keyvote3d {

/// SplitMix64 generator. Cheap to seed, so every (seed, index...) cell of a
/// computation can own an independent stream; results then do not depend on
/// evaluation order or thread schedule.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

namespace detail {
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
  z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
  return z ^ (z >> 33);
}
}  // namespace detail

/// Derives a child seed from a parent seed and an index path.
constexpr std::uint64_t derive_seed(std::uint64_t seed) { return seed; }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index,
                                    Rest... rest) {
  const std::uint64_t child =
      detail::mix64(seed ^ detail::mix64(index + 0x9E3779B97F4A7C15ULL));
  return derive_seed(child, static_cast<std::uint64_t>(rest)...);
}

template <typename... Indices>
SplitMix64 make_stream(std::uint64_t seed, Indices... indices) {
  return SplitMix64(derive_seed(seed, static_cast<std::uint64_t>(indices)...));
}

}  // namespace keyvote3d
