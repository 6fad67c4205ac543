#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace seqmtl {

// Seeded mt19937_64 stream. Real-valued draws use the top 53 bits of each
// output, and shuffles are a plain Fisher-Yates over that stream, so the
// sequence does not depend on the standard library's distribution code.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent stream derived from this generator's seed and a purpose tag.
  // Does not advance this generator.
  Rng split(std::string_view purpose) const { return Rng(derive_seed(seed_, purpose)); }

  static std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace seqmtl
