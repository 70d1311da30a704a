#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tsgen {

// Counter-based PRNG: draw n is a hash of (key, n), so streams are stateless
// apart from the counter, serialize to two integers, and split() derives an
// independent stream from a salt. The mixer is the splitmix64 finalizer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ kGolden)), counter_(0) {}

  static Rng from_state(std::uint64_t key, std::uint64_t counter) {
    Rng r(0);
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  // Independent stream; does not advance this one.
  Rng split(std::uint64_t salt) const {
    return from_state(mix64(key_ ^ mix64(salt + kGolden)), 0);
  }

  std::uint64_t next_u64() { return mix64(key_ + kGolden * ++counter_); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare,
  // so the counter alone determines the stream position).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }

  // Rademacher +-1.
  double sign() { return (next_u64() & 1ull) ? 1.0 : -1.0; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace tsgen
