#include "elcrf/potentials.hpp"

#include <cmath>
#include <string>

namespace elcrf {

namespace {

/// Random rows orthonormalized by Gram-Schmidt, then rescaled so every row
/// keeps the expected norm of a uniform(-scale, scale) draw. Keeping all k
/// factor directions alive at equal strength is what lets small-rank factors
/// train reliably; i.i.d. rows often start with a near-degenerate spectrum
/// whose weak directions never recover.
Matrix random_orthogonal_rows(std::size_t rank, std::size_t num_states,
                              double scale, Rng& rng) {
  Matrix rows(rank, num_states);
  for (double& value : rows.values()) value = rng.uniform(-scale, scale);
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t p = 0; p < r; ++p) {
      double dot = 0.0;
      double norm_sq = 0.0;
      for (std::size_t c = 0; c < num_states; ++c) {
        dot += rows(r, c) * rows(p, c);
        norm_sq += rows(p, c) * rows(p, c);
      }
      if (norm_sq > 0.0) {
        for (std::size_t c = 0; c < num_states; ++c) {
          rows(r, c) -= dot / norm_sq * rows(p, c);
        }
      }
    }
  }
  double target = scale * std::sqrt(static_cast<double>(num_states) / 3.0);
  for (std::size_t r = 0; r < rank; ++r) {
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < num_states; ++c) {
      norm_sq += rows(r, c) * rows(r, c);
    }
    double norm = std::sqrt(norm_sq);
    if (norm > 0.0) {
      for (std::size_t c = 0; c < num_states; ++c) {
        rows(r, c) *= target / norm;
      }
    }
  }
  return rows;
}

}  // namespace

TransitionFactors TransitionFactors::random_factorized(std::size_t num_states,
                                                       std::size_t rank,
                                                       Rng& rng) {
  if (rank == 0) throw ConfigError("factor size k must be >= 1");
  TransitionFactors factors;
  factors.mode = Mode::kFactorized;
  factors.num_states = num_states;
  factors.rank = rank;
  double scale = std::sqrt(1.0 / static_cast<double>(rank));
  factors.u = random_orthogonal_rows(rank, num_states, scale, rng);
  factors.v = random_orthogonal_rows(rank, num_states, scale, rng);
  return factors;
}

TransitionFactors TransitionFactors::random_full_rank(std::size_t num_states,
                                                      Rng& rng) {
  TransitionFactors factors;
  factors.mode = Mode::kFullRank;
  factors.num_states = num_states;
  factors.full = Matrix(num_states, num_states);
  for (double& value : factors.full.values()) {
    value = rng.uniform(-0.1, 0.1);
  }
  return factors;
}

std::size_t TransitionFactors::parameter_count() const {
  if (mode == Mode::kFactorized) return 2 * num_states * rank;
  return num_states * num_states;
}

ConstraintMask ConstraintMask::none(std::size_t num_states) {
  ConstraintMask mask;
  mask.num_states = num_states;
  mask.enabled = false;
  return mask;
}

ConstraintMask ConstraintMask::from_schema(const LabelSchema& schema,
                                           const StateSpace& states) {
  const std::size_t m = states.num_states;
  ConstraintMask mask;
  mask.num_states = m;
  mask.enabled = true;
  mask.table.assign(m * m, 0);
  // Label-pair legality lifts to every state pair through the ownership map.
  const std::size_t n = schema.size();
  std::vector<std::uint8_t> label_table(n * n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      label_table[a * n + b] = transition_allowed(
          schema.parsed(a), schema.parsed(b), schema.scheme());
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t label_i = states.label_of(i);
    for (std::size_t j = 0; j < m; ++j) {
      mask.table[i * m + j] = label_table[label_i * n + states.label_of(j)];
    }
  }
  return mask;
}

Matrix effective_transition_matrix(const TransitionFactors& factors,
                                   const ConstraintMask& mask) {
  const std::size_t m = factors.num_states;
  if (mask.enabled && mask.num_states != m) {
    throw std::invalid_argument("constraint mask / factor size mismatch");
  }
  Matrix result(m, m);
  if (factors.mode == TransitionFactors::Mode::kFullRank) {
    if (factors.full.rows() != m || factors.full.cols() != m) {
      throw std::invalid_argument("full-rank transition matrix shape mismatch");
    }
    result = factors.full;
  } else {
    if (factors.u.rows() != factors.rank || factors.u.cols() != m ||
        !factors.u.same_shape(factors.v)) {
      throw std::invalid_argument("transition factor shape mismatch");
    }
    // A(i, j) = sum_r U(r, i) * V(r, j)
    for (std::size_t r = 0; r < factors.rank; ++r) {
      std::span<const double> u_row = factors.u.row(r);
      std::span<const double> v_row = factors.v.row(r);
      for (std::size_t i = 0; i < m; ++i) {
        double u_ri = u_row[i];
        std::span<double> out = result.row(i);
        for (std::size_t j = 0; j < m; ++j) out[j] += u_ri * v_row[j];
      }
    }
  }
  if (mask.enabled) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (!mask.allowed(i, j)) result(i, j) = kLogZero;
      }
    }
  }
  return result;
}

Matrix effective_transition_matrix(const TransitionFactors& factors) {
  return effective_transition_matrix(factors,
                                     ConstraintMask::none(factors.num_states));
}

Matrix fold_output_potential(const Matrix& psi,
                             std::span<const std::size_t> gold,
                             const StateSpace& states) {
  if (gold.size() != psi.rows()) {
    throw std::invalid_argument("gold length does not match the lattice");
  }
  if (states.num_states != psi.cols()) {
    throw std::invalid_argument("state space does not match the lattice");
  }
  Matrix folded = psi;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (gold[t] >= states.label_to_states.size()) {
      throw SchemaError("gold label index " + std::to_string(gold[t]) +
                        " out of range");
    }
    std::span<double> row = folded.row(t);
    for (std::size_t z = 0; z < row.size(); ++z) {
      if (states.label_of(z) != gold[t]) row[z] = kLogZero;
    }
  }
  return folded;
}

}  // namespace elcrf
