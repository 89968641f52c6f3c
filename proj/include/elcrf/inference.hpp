#ifndef ELCRF_INFERENCE_HPP
#define ELCRF_INFERENCE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/label_schema.hpp"
#include "elcrf/matrix.hpp"
#include "elcrf/potentials.hpp"

namespace elcrf {

/// Non-owning view of one sequence's inference problem: T x M local
/// log-potentials plus the shared M x M transition log-potentials.
struct Lattice {
  Lattice(const Matrix& psi_in, const Matrix& trans_in);

  std::size_t length() const { return psi.rows(); }
  std::size_t num_states() const { return psi.cols(); }

  const Matrix& psi;
  const Matrix& trans;
};

/// log sum_i exp(v_i) via max-shift; kLogZero when every input is masked.
/// Throws std::invalid_argument on empty input.
double log_sum_exp(std::span<const double> values);

/// Forward messages alpha(t, j) = psi(t, j) + lse_i(alpha(t-1, i) + trans(i, j)).
Matrix forward_messages(const Lattice& lattice);

/// Backward messages beta(t, i) = lse_j(trans(i, j) + psi(t+1, j) + beta(t+1, j)).
Matrix backward_messages(const Lattice& lattice);

/// Log-partition over all latent paths; kLogZero when every path is masked.
double forward_log_partition(const Lattice& lattice);

/// Same quantity from the backward recursion (consistency checks).
double backward_log_partition(const Lattice& lattice);

/// Log-score of latent paths consistent with the gold label sequence:
/// forward_log_partition of the output-folded lattice. kLogZero signals an
/// infeasible clamping.
double clamped_log_score(const Lattice& lattice,
                         std::span<const std::size_t> gold,
                         const StateSpace& states);

struct InferenceResult {
  double log_z = 0.0;
  Matrix node_marginals;  // T x M
  Matrix alpha;           // kept so edge marginals are computable on demand
  Matrix beta;
};

/// Node marginals plus messages. When every path is masked, log_z is
/// kLogZero and the marginals are all zero.
InferenceResult marginals(const Lattice& lattice);

/// P(z_t = i, z_{t+1} = j), computed on demand from the stored messages.
double edge_marginal(const InferenceResult& result, const Lattice& lattice,
                     std::size_t t, std::size_t i, std::size_t j);

/// The full (t, ., .) slice; test and reporting use only.
Matrix edge_marginals_at(const InferenceResult& result, const Lattice& lattice,
                         std::size_t t);

struct ViterbiResult {
  std::vector<std::size_t> states;
  std::vector<std::size_t> labels;
  double score = 0.0;
};

/// MAP over latent paths; labels read off through the state-to-label map.
/// Ties are broken by the lowest state index at each backpointer and at the
/// final argmax. Throws InfeasibleDecodeError when every path is masked.
/// Every decode is audited against the masked transitions (see decode_audit).
ViterbiResult viterbi_decode(const Lattice& lattice, const StateSpace& states);

/// Global decode audit: counts decodes checked and mask violations seen.
/// The violation count staying at zero is an acceptance requirement.
namespace decode_audit {
std::size_t checked();
std::size_t violations();
void reset();
}  // namespace decode_audit

}  // namespace elcrf

#endif  // ELCRF_INFERENCE_HPP
