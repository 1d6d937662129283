#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace o3srl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named random streams derived from one master seed.
enum class Stream : std::uint64_t {
  dataset = 1,
  bandit = 2,
  evaluation = 3,
  oracle_noise = 4,
  instance = 5,
};

/// Counter-based split: seed(master, stream, index) =
/// splitmix64(splitmix64(master ^ splitmix64(stream)) + index).
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

/// Thin wrapper over mt19937_64. The engine output is fixed by the standard;
/// all derived draws are computed here so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n).
  std::size_t below(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  /// Standard normal (Box-Muller, second variate cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * M_PI * u2);
  }

  /// Index drawn from a probability vector (any container with size() and []).
  /// Rounding slack falls on the last index with positive mass.
  template <typename Probs>
  std::size_t categorical(const Probs& probs) {
    const double u = uniform();
    double cumulative = 0.0;
    std::size_t last_positive = 0;
    const auto n = static_cast<std::size_t>(probs.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double p = static_cast<double>(probs[i]);
      if (p > 0.0) last_positive = i;
      cumulative += p;
      if (u < cumulative && p > 0.0) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace o3srl
