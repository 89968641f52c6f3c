#ifndef ELCRF_POTENTIALS_HPP
#define ELCRF_POTENTIALS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/label_schema.hpp"
#include "elcrf/matrix.hpp"

namespace elcrf {

/// Per-sequence local log-potentials, row t = psi(x_t, .), shape T x M.
using LocalPotentials = Matrix;

/// Transition log-potentials over latent states: either the low-rank
/// factorization A = U^T V (U, V are k x M) or a full-rank M x M matrix.
struct TransitionFactors {
  enum class Mode { kFactorized, kFullRank };

  Mode mode = Mode::kFactorized;
  std::size_t num_states = 0;
  std::size_t rank = 0;  // k; unused in full-rank mode
  Matrix u;              // k x M
  Matrix v;              // k x M
  Matrix full;           // M x M

  /// Random orthogonal rows scaled like a uniform [-sqrt(1/k), +sqrt(1/k)]
  /// draw: initial A entries stay O(1) with every factor direction alive.
  static TransitionFactors random_factorized(std::size_t num_states,
                                             std::size_t rank, Rng& rng);
  static TransitionFactors random_full_rank(std::size_t num_states, Rng& rng);

  /// 2Mk factorized, M^2 full-rank.
  std::size_t parameter_count() const;
};

/// Hard transition legality over latent-state pairs, derived from the
/// label-level segmentation rules through the state-to-label map.
struct ConstraintMask {
  std::size_t num_states = 0;
  std::vector<std::uint8_t> table;  // row-major M x M, 1 = allowed
  bool enabled = false;

  bool allowed(std::size_t i, std::size_t j) const {
    return !enabled || table[i * num_states + j] != 0;
  }

  static ConstraintMask none(std::size_t num_states);
  static ConstraintMask from_schema(const LabelSchema& schema,
                                    const StateSpace& states);
};

/// U^T V (or A in full-rank mode) with masked entries forced to kLogZero.
Matrix effective_transition_matrix(const TransitionFactors& factors,
                                   const ConstraintMask& mask);
Matrix effective_transition_matrix(const TransitionFactors& factors);

/// Copy of psi with entry (t, z) forced to kLogZero whenever the state's
/// label differs from gold_t; the clamped (numerator) lattice.
Matrix fold_output_potential(const Matrix& psi,
                             std::span<const std::size_t> gold,
                             const StateSpace& states);

}  // namespace elcrf

#endif  // ELCRF_POTENTIALS_HPP
