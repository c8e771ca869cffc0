#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ncairfl {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// One element of a stream label path: either a tag or an integer index.
class StreamLabel {
 public:
  StreamLabel(std::string_view tag) : hash_(hash_tag(tag)) {}          // NOLINT
  StreamLabel(const char* tag) : hash_(hash_tag(tag)) {}               // NOLINT
  StreamLabel(std::int64_t index) : hash_(hash_index(index)) {}        // NOLINT
  StreamLabel(int index) : hash_(hash_index(index)) {}                 // NOLINT
  StreamLabel(std::uint64_t index) : hash_(hash_index(static_cast<std::int64_t>(index))) {}  // NOLINT

  std::uint64_t hash() const noexcept { return hash_; }

 private:
  // Tags and integers live in separate domains so "1" and 1 never collide.
  static std::uint64_t hash_tag(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= s.size();
    return detail::splitmix64(h ^ 0x7461677461677461ULL);
  }
  static std::uint64_t hash_index(std::int64_t i) noexcept {
    return detail::splitmix64(static_cast<std::uint64_t>(i) ^ 0x696e646578696e64ULL);
  }

  std::uint64_t hash_;
};

// Deterministic random stream. The engine is std::mt19937_64; the distribution
// helpers are written out here because the std:: distributions are allowed to
// differ between standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) {
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                      static_cast<std::uint32_t>(detail::splitmix64(key)),
                      static_cast<std::uint32_t>(detail::splitmix64(key) >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  std::complex<double> complex_normal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Key for the stream identified by (master_seed, labels...). Equal paths give
// equal keys; each label is mixed in with a full avalanche step.
inline std::uint64_t stream_key(std::uint64_t master_seed,
                                std::initializer_list<StreamLabel> labels) {
  std::uint64_t h = detail::splitmix64(master_seed ^ 0x6e636169726c6673ULL);
  std::uint64_t position = 0;
  for (const auto& label : labels) {
    h = detail::splitmix64(h ^ detail::splitmix64(label.hash() + ++position));
  }
  return detail::splitmix64(h ^ labels.size());
}

inline RngStream derive_stream(std::uint64_t master_seed,
                               std::initializer_list<StreamLabel> labels) {
  return RngStream(stream_key(master_seed, labels));
}

}  // namespace ncairfl
