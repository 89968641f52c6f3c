#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "elcrf/inference.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace elcrf;
using testing::random_integer_lattice;
using testing::random_lattice;
using testing::simple_state_space;

TEST_CASE("log_sum_exp basics") {
  std::vector<double> two_zeros = {0.0, 0.0};
  CHECK(log_sum_exp(two_zeros) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  std::vector<double> single = {5.0};
  CHECK(log_sum_exp(single) == doctest::Approx(5.0).epsilon(1e-12));
  std::vector<double> huge = {1000.0, 1000.0};
  CHECK(log_sum_exp(huge) ==
        doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(std::isfinite(log_sum_exp(huge)));
}

TEST_CASE("log_sum_exp masked inputs") {
  std::vector<double> all_masked = {kLogZero, kLogZero, kLogZero};
  CHECK(log_sum_exp(all_masked) == kLogZero);
  std::vector<double> mixed = {kLogZero, 1.5};
  CHECK(log_sum_exp(mixed) == doctest::Approx(1.5).epsilon(1e-12));
  std::vector<double> empty;
  CHECK_THROWS_AS(log_sum_exp(empty), std::invalid_argument);
}

TEST_CASE("forward log-partition on uniform lattices") {
  Matrix psi(2, 2, 0.0);
  Matrix trans(2, 2, 0.0);
  CHECK(forward_log_partition(Lattice(psi, trans)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Matrix psi1(1, 3, 0.0);
  Matrix trans1(3, 3, 0.0);
  CHECK(forward_log_partition(Lattice(psi1, trans1)) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("forward log-partition matches enumeration") {
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    auto [psi, trans] = random_lattice(4, 3, rng);
    double fast = forward_log_partition(Lattice(psi, trans));
    double slow = oracles::enum_log_partition(psi, trans);
    CHECK(std::abs(fast - slow) <= 1e-8);
  }
}

TEST_CASE("forward equals backward log-partition") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t length = 1 + rng.below(6);
    std::size_t m = 1 + rng.below(5);
    auto [psi, trans] = random_lattice(length, m, rng);
    Lattice lattice(psi, trans);
    CHECK(std::abs(forward_log_partition(lattice) -
                   backward_log_partition(lattice)) <= 1e-9);
  }
}

TEST_CASE("all-masked lattice yields the sentinel") {
  Matrix psi(2, 2, kLogZero);
  Matrix trans(2, 2, 0.0);
  CHECK(is_log_zero(forward_log_partition(Lattice(psi, trans))));
}

TEST_CASE("clamped log-score with state multiplicity") {
  // States {A: {0, 1}, B: {2}}, all potentials zero, T = 1.
  StateSpace states = simple_state_space({2, 1});
  Matrix psi(1, 3, 0.0);
  Matrix trans(3, 3, 0.0);
  Lattice lattice(psi, trans);
  std::vector<std::size_t> gold_a = {0};
  std::vector<std::size_t> gold_b = {1};
  double clamped_a = clamped_log_score(lattice, gold_a, states);
  double clamped_b = clamped_log_score(lattice, gold_b, states);
  double log_z = forward_log_partition(lattice);
  CHECK(clamped_a == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(clamped_b == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::exp(clamped_a - log_z) == doctest::Approx(2.0 / 3.0));
  CHECK(std::exp(clamped_b - log_z) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("clamped log-score matches restricted enumeration") {
  Rng rng(11);
  StateSpace states = simple_state_space({2, 1, 2});
  for (int trial = 0; trial < 30; ++trial) {
    auto [psi, trans] = random_lattice(4, 5, rng);
    std::vector<std::size_t> gold(4);
    for (auto& g : gold) g = rng.below(3);
    double fast = clamped_log_score(Lattice(psi, trans), gold, states);
    double slow = oracles::enum_clamped_log_score(psi, trans, gold, states);
    CHECK(std::abs(fast - slow) <= 1e-8);
  }
}

TEST_CASE("infeasible clamping returns the sentinel") {
  StateSpace states = simple_state_space({1, 1});
  Matrix psi(2, 2, 0.0);
  Matrix trans(2, 2, 0.0);
  trans(0, 0) = kLogZero;
  trans(0, 1) = kLogZero;  // nothing can follow state 0
  std::vector<std::size_t> gold = {0, 0};
  CHECK(is_log_zero(clamped_log_score(Lattice(psi, trans), gold, states)));
}

TEST_CASE("marginals on symmetric lattices") {
  Matrix psi(3, 2, 0.0);
  Matrix trans(2, 2, 0.0);
  InferenceResult result = marginals(Lattice(psi, trans));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(result.node_marginals(t, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(result.node_marginals(t, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  Matrix psi1(1, 2, 0.0);
  psi1(0, 0) = std::log(3.0);
  InferenceResult softmax = marginals(Lattice(psi1, trans));
  CHECK(softmax.node_marginals(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(softmax.node_marginals(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("marginals match enumeration") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto [psi, trans] = random_lattice(5, 4, rng);
    Lattice lattice(psi, trans);
    InferenceResult fast = marginals(lattice);
    oracles::EnumMarginals slow = oracles::enum_marginals(psi, trans);
    CHECK(std::abs(fast.log_z - slow.log_z) <= 1e-8);
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t z = 0; z < 4; ++z) {
        CHECK(std::abs(fast.node_marginals(t, z) - slow.node(t, z)) <= 1e-8);
      }
    }
    for (std::size_t t = 0; t + 1 < 5; ++t) {
      Matrix edge = edge_marginals_at(fast, lattice, t);
      for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
          CHECK(std::abs(edge(i, j) - slow.edge[t](i, j)) <= 1e-8);
        }
      }
    }
  }
}

TEST_CASE("marginal normalization and edge-node consistency") {
  Rng rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t length = 2 + rng.below(5);
    std::size_t m = 2 + rng.below(4);
    auto [psi, trans] = random_lattice(length, m, rng);
    Lattice lattice(psi, trans);
    InferenceResult result = marginals(lattice);
    for (std::size_t t = 0; t < length; ++t) {
      double row_sum = 0.0;
      for (std::size_t z = 0; z < m; ++z) row_sum += result.node_marginals(t, z);
      CHECK(std::abs(row_sum - 1.0) <= 1e-9);
    }
    for (std::size_t t = 0; t + 1 < length; ++t) {
      Matrix edge = edge_marginals_at(result, lattice, t);
      double slice_sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double row_total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          slice_sum += edge(i, j);
          row_total += edge(i, j);
        }
        // Marginalizing over the right axis gives the left node marginal.
        CHECK(std::abs(row_total - result.node_marginals(t, i)) <= 1e-9);
      }
      for (std::size_t j = 0; j < m; ++j) {
        double col_total = 0.0;
        for (std::size_t i = 0; i < m; ++i) col_total += edge(i, j);
        CHECK(std::abs(col_total - result.node_marginals(t + 1, j)) <= 1e-9);
      }
      CHECK(std::abs(slice_sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("psi row shift moves log_z and nothing else") {
  Rng rng(55);
  auto [psi, trans] = random_lattice(5, 3, rng);
  Lattice lattice(psi, trans);
  double log_z = forward_log_partition(lattice);
  InferenceResult before = marginals(lattice);
  StateSpace states = simple_state_space({1, 1, 1});
  ViterbiResult path_before = viterbi_decode(lattice, states);

  const double shift = 2.75;
  Matrix shifted = psi;
  for (std::size_t z = 0; z < 3; ++z) shifted(2, z) += shift;
  Lattice shifted_lattice(shifted, trans);
  CHECK(std::abs(forward_log_partition(shifted_lattice) - (log_z + shift)) <=
        1e-9);
  InferenceResult after = marginals(shifted_lattice);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t z = 0; z < 3; ++z) {
      CHECK(std::abs(after.node_marginals(t, z) -
                     before.node_marginals(t, z)) <= 1e-9);
    }
  }
  ViterbiResult path_after = viterbi_decode(shifted_lattice, states);
  CHECK(path_after.states == path_before.states);
}

TEST_CASE("label-sequence probabilities sum to one") {
  Rng rng(321);
  StateSpace states = simple_state_space({2, 1, 2});
  const std::size_t num_labels = 3;
  const std::size_t length = 4;
  for (int trial = 0; trial < 5; ++trial) {
    auto [psi, trans] = random_lattice(length, 5, rng);
    Lattice lattice(psi, trans);
    double log_z = forward_log_partition(lattice);
    double total = 0.0;
    std::vector<std::size_t> gold(length, 0);
    oracles::for_each_path(length, num_labels,
                           [&](const std::vector<std::size_t>& labels) {
                             double clamped = clamped_log_score(
                                 lattice, labels, states);
                             if (!is_log_zero(clamped)) {
                               total += std::exp(clamped - log_z);
                             }
                           });
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
}

TEST_CASE("viterbi on hand-built lattices") {
  StateSpace states = simple_state_space({1, 1});
  Matrix psi(2, 2);
  psi(0, 0) = 0.0;
  psi(0, 1) = 5.0;
  psi(1, 0) = 5.0;
  psi(1, 1) = 0.0;
  Matrix trans(2, 2, 0.0);
  ViterbiResult free = viterbi_decode(Lattice(psi, trans), states);
  CHECK(free.states == std::vector<std::size_t>{1, 0});
  CHECK(free.score == doctest::Approx(10.0).epsilon(1e-12));

  trans(1, 0) = kLogZero;  // forbid the locally best path
  ViterbiResult rerouted = viterbi_decode(Lattice(psi, trans), states);
  // [0,0] and [1,1] tie at 5; the lowest-index rule resolves to [0,0].
  CHECK(rerouted.states == std::vector<std::size_t>{0, 0});
  CHECK(rerouted.score == doctest::Approx(5.0).epsilon(1e-12));

  // With the tie removed the constraint visibly reroutes the path.
  psi(1, 0) = 3.0;
  ViterbiResult unique = viterbi_decode(Lattice(psi, trans), states);
  CHECK(unique.states == std::vector<std::size_t>{1, 1});
  CHECK(unique.score == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("viterbi matches exhaustive search") {
  Rng rng(2024);
  StateSpace states = simple_state_space({2, 2});
  for (int trial = 0; trial < 30; ++trial) {
    auto [psi, trans] = random_lattice(6, 4, rng);
    ViterbiResult fast = viterbi_decode(Lattice(psi, trans), states);
    oracles::EnumViterbi slow = oracles::enum_viterbi(psi, trans);
    REQUIRE(slow.feasible);
    CHECK(std::abs(fast.score - slow.score) <= 1e-10);
    CHECK(fast.states == slow.path);
  }
}

TEST_CASE("viterbi tie-break picks the lowest backpointer") {
  Rng rng(777);
  StateSpace states = simple_state_space({1, 1, 1});
  std::size_t ties_exercised = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto [psi, trans] = random_integer_lattice(4, 3, rng);
    ViterbiResult fast = viterbi_decode(Lattice(psi, trans), states);
    oracles::EnumViterbi slow = oracles::enum_viterbi(psi, trans);
    REQUIRE(slow.feasible);
    CHECK(fast.score == slow.score);  // integer sums are exact
    CHECK(fast.states == slow.path);
    // Count how often a genuine tie existed so the check is not vacuous.
    std::size_t optimal_paths = 0;
    oracles::for_each_path(4, 3, [&](const std::vector<std::size_t>& path) {
      if (static_cast<double>(oracles::path_score(psi, trans, path)) ==
          slow.score) {
        ++optimal_paths;
      }
    });
    if (optimal_paths > 1) ++ties_exercised;
  }
  CHECK(ties_exercised > 0);
}

TEST_CASE("viterbi score dominates sampled paths") {
  Rng rng(31);
  StateSpace states = simple_state_space({2, 2});
  auto [psi, trans] = random_lattice(6, 4, rng);
  ViterbiResult fast = viterbi_decode(Lattice(psi, trans), states);
  for (int sample = 0; sample < 200; ++sample) {
    std::vector<std::size_t> path(6);
    for (auto& z : path) z = rng.below(4);
    CHECK(static_cast<double>(oracles::path_score(psi, trans, path)) <=
          fast.score + 1e-12);
  }
}

TEST_CASE("viterbi labels follow the state map") {
  StateSpace states = simple_state_space({2, 1});
  Matrix psi(3, 3, 0.0);
  psi(0, 1) = 2.0;  // state 1 -> label 0
  psi(1, 2) = 2.0;  // state 2 -> label 1
  psi(2, 0) = 2.0;  // state 0 -> label 0
  Matrix trans(3, 3, 0.0);
  ViterbiResult result = viterbi_decode(Lattice(psi, trans), states);
  CHECK(result.states == std::vector<std::size_t>{1, 2, 0});
  CHECK(result.labels == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("all-masked decode throws") {
  StateSpace states = simple_state_space({1, 1});
  Matrix psi(1, 2, kLogZero);
  Matrix trans(2, 2, 0.0);
  CHECK_THROWS_AS(viterbi_decode(Lattice(psi, trans), states),
                  InfeasibleDecodeError);
}

TEST_CASE("decode audit stayed clean") {
  CHECK(decode_audit::checked() > 0);
  CHECK(decode_audit::violations() == 0);
}
