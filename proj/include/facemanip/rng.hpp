#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace facemanip {

// splitmix64; used to decorrelate derived seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded mt19937_64 wrapper. All randomness in the library flows through
// explicitly passed Rng instances so runs are reproducible end to end.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(mix_seed(seed)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }
  std::uint64_t next_u64() { return gen_(); }

  // Deterministic child stream.
  Rng fork() { return Rng(gen_()); }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }
  void restore(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace facemanip
