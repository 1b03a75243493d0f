#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fedgr {

// Every random decision in a run is drawn from a stream keyed by
// (run seed, purpose, client, round) instead of by consumption order. That way
// adding or removing one consumer (e.g. a loss term that needs an extra
// augmented view) cannot shift the draws seen by everything else, and two
// methods that share a schedule consume identical streams.
enum class StreamPurpose : std::uint64_t {
  data = 1,        // synthetic feature generation
  partition = 2,   // shard assignment
  noise = 3,       // label corruption
  model_init = 4,  // global weight init
  sampling = 5,    // per-round client selection + drop coins
  shuffle = 6,     // per-client per-round epoch shuffling
  weak_aug = 7,    // weak views (teachers)
  strong_aug = 8,  // strong views (student)
  pseudo = 9,      // weak views used for the pseudo-label pass
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}
}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  constexpr std::uint64_t phi = 0x9e3779b97f4a7c15ULL;
  std::uint64_t s = detail::mix64(base + phi);
  s = detail::mix64(s ^ (a + phi));
  s = detail::mix64(s ^ (b + phi));
  s = detail::mix64(s ^ (c + phi));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t base, StreamPurpose p,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  return derive_seed(base, static_cast<std::uint64_t>(p), a, b);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform in [0, n), unbiased
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<int>(v % un);
  }

  // standard normal via Box-Muller; the spare is cached, so one call consumes
  // either two uniforms or none
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Marsaglia-Tsang; shape < 1 handled with the usual U^(1/shape) boost
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform_positive();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_positive();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)],
                v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  double uniform_positive() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedgr
