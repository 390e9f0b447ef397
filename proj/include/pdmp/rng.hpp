#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace pdmp {

// Philox4x32-10 counter-based generator exposed as a 64-bit URBG. The key is
// the run seed and the upper counter words select the substream, so the
// draws of path i depend only on (seed, i).
class Philox4x32 {
public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream)
    : key_ {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      stream_ {stream}
  {
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()()
  {
    if (lane_ == 2) {
      Block ctr {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
      buffer_ = bijection(ctr, key_);
      ++block_;
      lane_ = 0;
    }
    auto lo = buffer_[2 * lane_];
    auto hi = buffer_[2 * lane_ + 1];
    ++lane_;
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  // Uniform on the open interval (0, 1).
  double uniform()
  {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential() { return -std::log(uniform()); }

  // Ten rounds of the Philox S-box on one counter block.
  static Block bijection(Block ctr, Key key)
  {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += w0;
        key[1] += w1;
      }
      std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
        static_cast<std::uint32_t>(p1),
        static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
        static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

private:
  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ {0};
  Block buffer_ {};
  int lane_ {2};
};

} // namespace pdmp
