#pragma once

#include <cstdint>
#include <span>

namespace mbgen {

// Counter-based generator: draw k is a fixed mix of (seed, k), so a stream is
// fully determined by its seed and the number of values drawn. Independent
// substreams come from child(), which derives a fresh seed; results are
// bit-reproducible across platforms and thread counts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform01();      // [0, 1)
  double uniform_open();   // (0, 1]
  double normal();         // standard normal, Box-Muller
  double uniform(double lo, double hi);
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n)
  std::uint32_t categorical(std::span<const double> probs);

  Rng child(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  static Rng restore(std::uint64_t seed, std::uint64_t counter);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace mbgen
