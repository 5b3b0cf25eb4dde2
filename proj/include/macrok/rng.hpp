#pragma once

#include <cstdint>
#include <random>

namespace macrok {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Seedable generator. Independent streams are derived from (seed, stream)
// so parallel workers never share state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(detail::splitmix64(s)),
                      static_cast<std::uint32_t>(detail::splitmix64(s)),
                      static_cast<std::uint32_t>(detail::splitmix64(s)),
                      static_cast<std::uint32_t>(detail::splitmix64(s))};
    engine_.seed(seq);
  }

  Rng split(std::uint64_t stream) { return Rng(engine_(), stream); }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on (0, 1].
  double uniform_open_closed() { return 1.0 - uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace macrok
