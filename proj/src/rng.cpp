#include "jedi/rng.hpp"

#include <cmath>
#include <numbers>

namespace jedi {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::stream(std::uint64_t seed, std::string_view name,
                std::initializer_list<std::uint64_t> path) {
  Rng r(mix64(mix64(seed) ^ hash_name(name)));
  for (std::uint64_t p : path) r = r.split(p);
  return r;
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
}

std::uint64_t Rng::next_u64() {
  std::uint64_t c = counter_++;
  return mix64(key_ + mix64(c));
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // 1 - u1 lies in (0, 1], so the log is finite.
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace jedi
