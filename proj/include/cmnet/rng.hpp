#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cmnet {

// SplitMix64: a 64-bit shift-xor mixing generator (Steele, Lea, Flood 2014).
// Every random draw in the repository flows from one root seed through this
// generator; child streams are derived with child()/fork so distinct purposes
// never share a stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Deterministic child stream keyed by a label and an index.
  Rng child(std::string_view label, uint64_t index = 0) const {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
    for (char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    Rng r(state_ ^ h);
    uint64_t mixed = r.next_u64() ^ (index * 0x9e3779b97f4a7c15ULL);
    return Rng(mixed);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace cmnet
