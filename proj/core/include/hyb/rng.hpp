#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hyb {

// Deterministic RNG used everywhere randomness is needed. Wraps mt19937_64
// with hand-rolled draws so that sequences are reproducible bit-for-bit
// across platforms (std::uniform_real_distribution and friends make no such
// promise). State round-trips through a string for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Modulo bias is below 2^-53 for any n that
  // fits desk-scale use and costs nothing in determinism.
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("rng: uniform_int needs n > 0");
    return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller. One value per call, no cached spare,
  // so serialized state alone determines the remaining stream.
  double normal() {
    double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw std::invalid_argument("rng: malformed state string");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace hyb
