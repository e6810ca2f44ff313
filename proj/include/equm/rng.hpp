#pragma once

#include <cstdint>
#include <limits>

namespace equm {

/// Counter-based random stream addressed by (seed, stream_id).
///
/// Draw k of a stream is splitmix64(key + k * golden), where key mixes seed and
/// stream id. Output is a pure function of (seed, stream_id, k), so sequences
/// are identical across runs, platforms and thread schedules. Distributions are
/// implemented here rather than with <random> because the standard library
/// distributions are not specified bit-exactly.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id), key_(mix(mix(seed) ^ (stream_id * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (counter_++) * kGolden); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t draws() const { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Samples an index from a probability vector by inverse CDF.
template <typename ProbVec>
int sample_categorical(const ProbVec& probs, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n - 1; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

// Stream-id bases. Training episode k of a run draws from kTrainStreams + k,
// evaluation trial i from kEvalStreams + i.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kTrainStreams = 1ULL << 20;
inline constexpr std::uint64_t kCheckpointEvalStreams = 1ULL << 40;
inline constexpr std::uint64_t kEvalStreams = 1ULL << 48;

}  // namespace equm
