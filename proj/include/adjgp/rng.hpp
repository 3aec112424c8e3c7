#ifndef ADJGP_RNG_HPP_
#define ADJGP_RNG_HPP_

#include <cstdint>
#include <random>

namespace adjgp {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Reproducible random source.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Distribution transforms are spelled out here instead of using
// std::normal_distribution and friends, whose algorithms differ between
// standard libraries:
//
//   uniform()  = (next() >> 11) * 2^-53                    in [0, 1)
//   normal()   = Box-Muller on (1 - uniform(), uniform()), cosine branch
//                first, sine branch cached for the following call
//
// Sub-streams: Rng::stream(seed, k) seeds the engine with
// splitmix64(seed ^ splitmix64(k + 1)). Feature m of a basis draws from
// stream(seed, m), so a single feature can be regenerated without replaying
// the others.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next() { return engine_(); }
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace adjgp

#endif  // ADJGP_RNG_HPP_
