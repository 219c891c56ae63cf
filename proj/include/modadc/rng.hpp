#pragma once

#include <cstdint>
#include <string_view>

namespace modadc {

// Splittable generator. Streams are derived by hashing (master, trial, tag),
// so any trial of any experiment can be reproduced in isolation and trials
// may be evaluated in any order, or in parallel, without sharing state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : state_(seed ^ kGamma) { next_u64(); }

  static Rng derive(std::uint64_t master, std::uint64_t trial,
                    std::string_view tag) {
    std::uint64_t h = master;
    h = mix(h ^ (trial + kGamma));
    for (unsigned char c : tag) h = mix(h ^ c);
    return Rng(h);
  }

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // uniform on [0, 1), 53-bit resolution
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // standard normal; two uniforms per call, no cached spare
  double next_gaussian();

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~0ull; }
  std::uint64_t operator()() { return next_u64(); }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace modadc
