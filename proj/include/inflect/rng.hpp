#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace inflect {

/// SplitMix64 finalizer; used both to seed generators and to mix stream names.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of the named child stream of `root`. Independent of how much the
/// parent generator has been consumed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

/// xoshiro256** generator with portable uniform/normal draws, so that a seed
/// produces the same numbers regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng stream(std::string_view name) const { return Rng(derive_seed(seed_, name)); }

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n)
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace inflect
