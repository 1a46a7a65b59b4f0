#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace qsd {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Streams are independent by construction: the 64-bit stream id occupies
// counter words 2..3 while the running block index occupies words 0..1, so
// (seed, stream) pairs never share a counter block.  Conventions used
// throughout this project:
//   * Fleming-Viot particle i draws from stream i,
//   * Monte Carlo path / replicate k draws from stream k,
//   * single-path simulators use stream 0 of the given seed.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  std::uint32_t next_u32() {
    if (have_ == 0) {
      buf_ = block(static_cast<std::uint32_t>(block_index_),
                   static_cast<std::uint32_t>(block_index_ >> 32));
      ++block_index_;
      have_ = 4;
    }
    return buf_[4 - have_--];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform on [0,1) with 53 random bits.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; safe as a log argument.
  double u01_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(u01_pos()) / rate; }

  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return spare_normal_;
    }
    double u = u01_pos(), v = u01();
    double r = std::sqrt(-2.0 * std::log(u));
    double a = 6.283185307179586476925286766559 * v;
    spare_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection keeps the draw exactly uniform.
    std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(a) * b) >> 32);
  }

  std::array<std::uint32_t, 4> block(std::uint32_t c0, std::uint32_t c1) const {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    std::uint32_t x0 = c0, x1 = c1, x2 = stream_lo_, x3 = stream_hi_;
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0 = mulhi(M0, x0), lo0 = M0 * x0;
      std::uint32_t hi1 = mulhi(M1, x2), lo1 = M1 * x2;
      std::uint32_t y0 = hi1 ^ x1 ^ k0, y1 = lo1;
      std::uint32_t y2 = hi0 ^ x3 ^ k1, y3 = lo0;
      x0 = y0; x1 = y1; x2 = y2; x3 = y3;
      k0 += W0; k1 += W1;
    }
    return {x0, x1, x2, x3};
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int have_ = 0;
  bool have_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace qsd
