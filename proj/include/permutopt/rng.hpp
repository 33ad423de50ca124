#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace permutopt {

/// splitmix64 step: advances `state` by the golden-ratio increment and returns
/// the finalized output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from a parent seed and a stream tag.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

/// Deterministic pseudo-random generator.
///
/// Algorithm: xoshiro256** 1.0 (Blackman & Vigna, 2018). The four state words
/// are the first four outputs of splitmix64 started at `seed`. Derived values:
///   - uniform():  (next_u64() >> 11) * 2^-53, a 53-bit double in [0, 1)
///   - below(n):   Lemire's multiply-shift with rejection, exactly uniform on [0, n)
///   - normal():   Box-Muller cosine branch from two uniforms, u1 mapped to (0, 1]
/// Integer outputs are bit-identical on every platform. normal() goes through
/// std::log/std::cos/std::sqrt and is reproducible for a fixed libm.
class SeededRng {
 public:
  using result_type = std::uint64_t;
  using State = std::array<std::uint64_t, 4>;

  explicit SeededRng(std::uint64_t seed);

  static SeededRng from_state(const State& state);

  const State& state() const { return state_; }

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);
  double normal();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  SeededRng() = default;
  State state_{};
};

/// n draws from uniform(); advances rng.
std::vector<double> rng_uniform(SeededRng& rng, std::size_t n);

}  // namespace permutopt
