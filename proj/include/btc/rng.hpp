#pragma once

#include <cstdint>

namespace btc {

// SplitMix64 stream. Used everywhere randomness is needed so that runs are
// reproducible bit-for-bit from a single master seed, independent of the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 24-bit resolution (exact in float).
  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Independent child stream identified by a tag. Children with distinct
  // tags (or from distinct parents) do not overlap in practice.
  Rng fork(std::uint64_t tag) const {
    Rng mixer(state_ ^ (tag * 0xD1B54A32D192ED03ULL + 0x8BB84B93962EACC9ULL));
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates shuffle driven by the stream above.
template <typename Vec>
void seeded_shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace btc
