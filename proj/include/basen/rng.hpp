#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace basen {

// Deterministic RNG used everywhere randomness is needed. std::mt19937_64 has
// a fully specified sequence, and the uniform/normal transforms below avoid
// the implementation-defined std:: distributions, so identical seeds give
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // uniform in (0, 1), safe for log()
  double uniform_open() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one spare value cached to keep the stream cheap.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // standard Gumbel: -log(-log(U)), U in (0,1)
  double gumbel() { return -std::log(-std::log(uniform_open())); }

  // integer in [0, n)
  uint64_t below(uint64_t n) { return eng_() % n; }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent per-item stream derived from a run seed and a stable string id.
inline Rng derive_rng(uint64_t seed, const std::string& id) {
  return Rng(splitmix64(seed ^ fnv1a(id)));
}

inline Rng derive_rng(uint64_t seed, uint64_t salt) {
  return Rng(splitmix64(seed ^ splitmix64(salt)));
}

}  // namespace basen
