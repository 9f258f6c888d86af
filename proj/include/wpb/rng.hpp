#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace wpb {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Maps a 128-bit counter under a 64-bit key to 128
/// pseudo-random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// 64-bit finalizer from SplitMix64; used to derive stream keys.
std::uint64_t mix64(std::uint64_t x);

struct RngState {
  std::uint64_t key = 0;
  std::uint64_t position = 0;

  bool operator==(const RngState&) const = default;
};

/// Counter-based generator. Every draw is a pure function of (key, position),
/// so streams keyed by (seed, epoch, batch, example) reproduce exactly no
/// matter how work is scheduled.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t position = 0)
      : key_(key), position_(position) {}
  explicit CounterRng(RngState state) : CounterRng(state.key, state.position) {}

  /// Stream keyed by a seed and any number of integer tags.
  static CounterRng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  /// +1 or -1 with equal probability.
  double rademacher();
  /// Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  RngState state() const { return {key_, position_}; }

 private:
  std::uint64_t key_;
  std::uint64_t position_;
};

}  // namespace wpb
