#pragma once

// Shared primitives: error types, counter-based random streams, and a
// deterministic parallel-for used by the samplers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace uge {

using NodeId = std::uint32_t;

/// Bad input: malformed files, invalid configuration, schema mismatches.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure during a computation that had valid inputs (non-finite loss,
/// unwritable output). The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -----------------------------------------------------------------------------
// Random streams
// -----------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and up to three
/// counters. Every sampler keys its stream on (seed, purpose, index...) so
/// results never depend on evaluation order or thread count.
inline constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b = 0,
                                           std::uint64_t c = 0) noexcept {
  std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (c + 0x2545f4914f6cdd1dULL));
  return h;
}

/// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
inline constexpr double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// SplitMix64 generator. Cheap to construct, so one can be created per node,
/// per group, or per epoch. Distributions are implemented here rather than
/// through <random> because the standard distributions are not specified
/// bit-for-bit across library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return unit_interval(next()); }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Rejection on the biased tail keeps the draw exactly uniform.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t state_;
};

/// Stream purposes. Distinct constants keep streams for different samplers
/// disjoint even when they share a master seed and index.
namespace stream {
inline constexpr std::uint64_t kSplit = 0x11;
inline constexpr std::uint64_t kPairs = 0x12;
inline constexpr std::uint64_t kAssign = 0x13;
inline constexpr std::uint64_t kInit = 0x21;
inline constexpr std::uint64_t kOrder = 0x22;
inline constexpr std::uint64_t kGroups = 0x23;
inline constexpr std::uint64_t kRegularizer = 0x24;
inline constexpr std::uint64_t kFairwalk = 0x25;
inline constexpr std::uint64_t kCandidates = 0x31;
inline constexpr std::uint64_t kProbe = 0x32;
}  // namespace stream

// -----------------------------------------------------------------------------
// Parallelism
// -----------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static block
/// partition. fn must only write to slots owned by index i.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  const std::size_t block = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace uge
