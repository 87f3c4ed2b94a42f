#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdro {

// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, so stream names map to stable 64-bit tags.
constexpr std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// A named random substream derived from a master seed. Each purpose
/// (x-batches, z-batches, initialisation) gets its own stream so that
/// changing how many draws one consumer makes leaves the others untouched.
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  RngStream(std::uint64_t master_seed, std::string_view name)
      : seed_(mix64(master_seed ^ mix64(hash_name(name)))), engine_(seed_) {}

  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  engine_type& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }

 private:
  std::uint64_t seed_;
  engine_type engine_;
};

}  // namespace cdro
