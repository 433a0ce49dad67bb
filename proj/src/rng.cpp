#include "khid/rng.hpp"

#include <cmath>
#include <numbers>

namespace khid {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

std::uint64_t hash_string(std::string_view s, std::uint64_t seed) noexcept {
  // FNV-1a, then finalized so short strings spread over all bits.
  std::uint64_t h = 0xCBF29CE484222325ULL ^ splitmix64(seed);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

static double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double Rng::uniform() noexcept { return to_unit(next_u64()); }

double Rng::normal() noexcept {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) noexcept {
  if (n == 0) return 0;
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  return to_unit(splitmix64(hash_combine(seed, stream) + index * 0x9E3779B97F4A7C15ULL));
}

}  // namespace khid
