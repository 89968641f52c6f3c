#ifndef ELCRF_TESTS_TEST_HELPERS_HPP
#define ELCRF_TESTS_TEST_HELPERS_HPP

#include <string>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/label_schema.hpp"
#include "elcrf/matrix.hpp"

namespace elcrf::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            double lo = -2.0, double hi = 2.0) {
  Matrix matrix(rows, cols);
  for (double& value : matrix.values()) value = rng.uniform(lo, hi);
  return matrix;
}

/// Random lattice potentials with entries uniform in [-2, 2].
struct RandomLattice {
  Matrix psi;
  Matrix trans;
};

inline RandomLattice random_lattice(std::size_t length, std::size_t m,
                                    Rng& rng) {
  return {random_matrix(length, m, rng), random_matrix(m, m, rng)};
}

/// Integer-valued potentials in {-2..2}: path-score sums are exact in
/// double, so score ties are exact and tie-break checks are meaningful.
inline RandomLattice random_integer_lattice(std::size_t length, std::size_t m,
                                            Rng& rng) {
  RandomLattice lattice{Matrix(length, m), Matrix(m, m)};
  for (double& v : lattice.psi.values()) {
    v = static_cast<double>(rng.below(5)) - 2.0;
  }
  for (double& v : lattice.trans.values()) {
    v = static_cast<double>(rng.below(5)) - 2.0;
  }
  return lattice;
}

/// A state space mapping M states onto ceil(M / states_per_label) labels.
inline StateSpace simple_state_space(
    const std::vector<std::size_t>& states_per_label) {
  StateSpace states;
  for (std::size_t label = 0; label < states_per_label.size(); ++label) {
    std::size_t begin = states.state_to_label.size();
    for (std::size_t s = 0; s < states_per_label[label]; ++s) {
      states.state_to_label.push_back(label);
    }
    states.label_to_states.emplace_back(begin, states.state_to_label.size());
  }
  states.num_states = states.state_to_label.size();
  return states;
}

inline LabelSchema tiny_schema(const std::vector<std::string>& labels) {
  std::vector<std::int64_t> counts(labels.size(), 1);
  return LabelSchema::from_labels(labels, counts, TagScheme::kIob);
}

}  // namespace elcrf::testing

#endif  // ELCRF_TESTS_TEST_HELPERS_HPP
