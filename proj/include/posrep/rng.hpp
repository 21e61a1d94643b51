#pragma once

#include <cstdint>
#include <string_view>

namespace posrep {

// PCG32 (XSH-RR, 64-bit state, 64-bit stream selector). Output sequence is a
// pure function of (seed, stream), independent of platform.
class Rng {
 public:
  Rng() : Rng(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  Rng(std::uint64_t seed, std::uint64_t stream);

  // Independent stream derived from a purpose label, e.g. "offsets".
  static Rng for_purpose(std::uint64_t seed, std::string_view label);

  std::uint32_t next_u32();

  // Exactly uniform on {0, ..., n} (rejection sampling, no modulo bias).
  std::uint32_t uniform_int(std::uint32_t n);

  // Uniform on [0, 1) with 24 bits of mantissa.
  float uniform_float();
  double uniform_double();
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
};

// FNV-1a, 64 bit.
std::uint64_t hash_label(std::string_view label);

}  // namespace posrep
