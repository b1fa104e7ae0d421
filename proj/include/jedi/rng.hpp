#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace jedi {

// Counter-based generator. Draw k of a stream is mix(key, k), so a stream is
// fully described by (key, counter) and any sub-stream can be derived without
// touching the parent. Every stochastic site takes its own named stream:
//
//   "init"     parameter initialization, split by parameter index
//   "dropout"  masks, split by (epoch, batch, site)
//   "shuffle"  batch construction, split by epoch
//   "world"    synthetic world generation
//   "split"    train/val re-marking
class Rng {
 public:
  explicit Rng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  // Stream for `name` under `seed`, optionally narrowed by an index path.
  static Rng stream(std::uint64_t seed, std::string_view name,
                    std::initializer_list<std::uint64_t> path = {});

  // Independent child stream; does not advance this generator.
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1), 53 bits
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // Box-Muller, one variate per two uniforms
  std::uint64_t below(std::uint64_t bound);  // unbiased, bound > 0

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) { shuffle(std::span<T>(items)); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_name(std::string_view name);

}  // namespace jedi
