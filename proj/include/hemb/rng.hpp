#ifndef HEMB_RNG_HPP_
#define HEMB_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hemb {

// Seeded random source with platform-independent derived distributions.
// std::mt19937_64 has a standardized output sequence; the std:: distribution
// adaptors do not, so every draw here is built from raw engine words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, stream) pairs, e.g. one per training iteration.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  double normal();

  // k distinct values from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace hemb

#endif  // HEMB_RNG_HPP_
