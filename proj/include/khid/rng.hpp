#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace khid {

// Counter-based random source. Every draw is a pure function of
// (seed, stream, counter), so results do not depend on call order across
// streams or on the standard library's distribution implementations.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(hash_combine(seed, stream)) {}

  std::uint64_t next_u64() noexcept { return splitmix64(key_ + counter_++ * 0x9E3779B97F4A7C15ULL); }
  // Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stateless draw for element `index` of stream `stream`.
double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept;

}  // namespace khid
