#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace stablei2i::detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for item `index` of a run; independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index)
{
  return splitmix64(splitmix64(run_seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Platform-stable random source.
///
/// std::mt19937_64 has a standard-mandated output sequence, but the
/// std::*_distribution adaptors do not, so every mapping to a range is done
/// here with integer arithmetic.
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi)
  {
    const std::uint64_t span = hi - lo;
    if (span == ~std::uint64_t{0})
      return next();
    const std::uint64_t range = span + 1;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range) - 1;
    std::uint64_t x;
    do {
      x = next();
    } while (x > limit);
    return lo + x % range;
  }

  /// Uniform double in [0, 1) built from 53 random bits.
  double unit()
  {
    return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /// Approximate standard normal deviate scaled by 65536 (Irwin-Hall, n=12).
  std::int64_t gaussian_q16()
  {
    std::int64_t sum = 0;
    for (int i = 0; i < 12; ++i)
      sum += static_cast<std::int64_t>(next() >> 48);
    return sum - 6 * 65536;
  }

  template <class T>
  void shuffle(std::vector<T>& items)
  {
    for (std::size_t i = items.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, i - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace stablei2i::detail
