#pragma once

#include <cstdint>
#include <vector>

namespace adms2s {

// splitmix64. The single generator behind every random decision in the
// toolkit: parameter init, dropout, shuffling, synthetic corpora. One 64-bit
// seed fans out into per-purpose child streams via derive(), so runs are
// reproducible end to end and ports can match the structure stream by stream.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n); n = 0 yields 0.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  // Independent child stream; distinct labels give unrelated streams.
  SplitMix64 derive(std::uint64_t label) {
    return SplitMix64(next() ^ (label * 0xD6E8FEB86659FD93ULL));
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates with draws from the given stream.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace adms2s
