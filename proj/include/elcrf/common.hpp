#ifndef ELCRF_COMMON_HPP
#define ELCRF_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace elcrf {

// Masked log-potentials use a large finite negative value instead of -inf:
// sums with real scores stay finite while exp() underflows to exactly zero.
inline constexpr double kLogZero = -1e30;

inline bool is_log_zero(double x) { return x <= kLogZero * 0.5; }

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleDecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic PRNG (xoshiro256**, seeded via splitmix64). Self-contained
/// so that seeded runs are bit-identical regardless of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_[4];
};

/// Mixes independent seed components into one stream seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace elcrf

#endif  // ELCRF_COMMON_HPP
