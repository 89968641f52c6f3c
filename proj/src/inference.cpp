#include "elcrf/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace elcrf {

namespace {

std::atomic<std::size_t> g_decodes_checked{0};
std::atomic<std::size_t> g_decode_violations{0};

}  // namespace

namespace decode_audit {

std::size_t checked() { return g_decodes_checked.load(); }
std::size_t violations() { return g_decode_violations.load(); }
void reset() {
  g_decodes_checked.store(0);
  g_decode_violations.store(0);
}

}  // namespace decode_audit

Lattice::Lattice(const Matrix& psi_in, const Matrix& trans_in)
    : psi(psi_in), trans(trans_in) {
  if (psi.rows() == 0) {
    throw std::invalid_argument("lattice requires T >= 1");
  }
  if (trans.rows() != psi.cols() || trans.cols() != psi.cols()) {
    throw std::invalid_argument("transition matrix does not match psi width");
  }
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("log_sum_exp: empty input");
  }
  double max_value = *std::max_element(values.begin(), values.end());
  if (is_log_zero(max_value)) return kLogZero;
  double total = 0.0;
  for (double v : values) total += std::exp(v - max_value);
  return max_value + std::log(total);
}

Matrix forward_messages(const Lattice& lattice) {
  const std::size_t length = lattice.length();
  const std::size_t m = lattice.num_states();
  Matrix alpha(length, m);
  for (std::size_t j = 0; j < m; ++j) alpha(0, j) = lattice.psi(0, j);
  std::vector<double> scratch(m);
  for (std::size_t t = 1; t < length; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        scratch[i] = alpha(t - 1, i) + lattice.trans(i, j);
      }
      double incoming = log_sum_exp(scratch);
      alpha(t, j) =
          is_log_zero(incoming) ? kLogZero : incoming + lattice.psi(t, j);
    }
  }
  return alpha;
}

Matrix backward_messages(const Lattice& lattice) {
  const std::size_t length = lattice.length();
  const std::size_t m = lattice.num_states();
  Matrix beta(length, m);
  std::vector<double> scratch(m);
  for (std::size_t t = length - 1; t-- > 0;) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        scratch[j] =
            lattice.trans(i, j) + lattice.psi(t + 1, j) + beta(t + 1, j);
      }
      beta(t, i) = log_sum_exp(scratch);
    }
  }
  return beta;
}

double forward_log_partition(const Lattice& lattice) {
  Matrix alpha = forward_messages(lattice);
  return log_sum_exp(alpha.row(alpha.rows() - 1));
}

double backward_log_partition(const Lattice& lattice) {
  Matrix beta = backward_messages(lattice);
  const std::size_t m = lattice.num_states();
  std::vector<double> initial(m);
  for (std::size_t j = 0; j < m; ++j) {
    initial[j] = lattice.psi(0, j) + beta(0, j);
  }
  return log_sum_exp(initial);
}

double clamped_log_score(const Lattice& lattice,
                         std::span<const std::size_t> gold,
                         const StateSpace& states) {
  Matrix folded = fold_output_potential(lattice.psi, gold, states);
  return forward_log_partition(Lattice(folded, lattice.trans));
}

InferenceResult marginals(const Lattice& lattice) {
  InferenceResult result;
  result.alpha = forward_messages(lattice);
  result.beta = backward_messages(lattice);
  result.log_z = log_sum_exp(result.alpha.row(result.alpha.rows() - 1));
  result.node_marginals = Matrix(lattice.length(), lattice.num_states());
  if (is_log_zero(result.log_z)) return result;  // all paths masked
  for (std::size_t t = 0; t < lattice.length(); ++t) {
    for (std::size_t z = 0; z < lattice.num_states(); ++z) {
      result.node_marginals(t, z) =
          std::exp(result.alpha(t, z) + result.beta(t, z) - result.log_z);
    }
  }
  return result;
}

double edge_marginal(const InferenceResult& result, const Lattice& lattice,
                     std::size_t t, std::size_t i, std::size_t j) {
  if (is_log_zero(result.log_z)) return 0.0;
  return std::exp(result.alpha(t, i) + lattice.trans(i, j) +
                  lattice.psi(t + 1, j) + result.beta(t + 1, j) -
                  result.log_z);
}

Matrix edge_marginals_at(const InferenceResult& result, const Lattice& lattice,
                         std::size_t t) {
  const std::size_t m = lattice.num_states();
  Matrix slice(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      slice(i, j) = edge_marginal(result, lattice, t, i, j);
    }
  }
  return slice;
}

ViterbiResult viterbi_decode(const Lattice& lattice,
                             const StateSpace& states) {
  const std::size_t length = lattice.length();
  const std::size_t m = lattice.num_states();
  if (states.num_states != m) {
    throw std::invalid_argument("state space does not match the lattice");
  }

  Matrix chart(length, m, kLogZero);
  std::vector<std::vector<std::size_t>> backpointer(
      length, std::vector<std::size_t>(m, 0));
  for (std::size_t j = 0; j < m; ++j) chart(0, j) = lattice.psi(0, j);
  for (std::size_t t = 1; t < length; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = kLogZero * 4;
      std::size_t best_prev = 0;
      for (std::size_t i = 0; i < m; ++i) {
        // Strict > keeps the lowest previous index on ties.
        double score = chart(t - 1, i) + lattice.trans(i, j);
        if (score > best) {
          best = score;
          best_prev = i;
        }
      }
      chart(t, j) = is_log_zero(best) ? kLogZero : best + lattice.psi(t, j);
      backpointer[t][j] = best_prev;
    }
  }

  double best_final = kLogZero * 4;
  std::size_t best_state = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (chart(length - 1, j) > best_final) {
      best_final = chart(length - 1, j);
      best_state = j;
    }
  }
  if (is_log_zero(best_final)) {
    throw InfeasibleDecodeError("viterbi: every latent path is masked");
  }

  ViterbiResult result;
  result.score = best_final;
  result.states.resize(length);
  result.states[length - 1] = best_state;
  for (std::size_t t = length - 1; t > 0; --t) {
    result.states[t - 1] = backpointer[t][result.states[t]];
  }
  result.labels.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    result.labels[t] = states.label_of(result.states[t]);
  }

  // Audit: a decoded path must never use a masked edge or node.
  bool violated = false;
  for (std::size_t t = 0; t < length; ++t) {
    if (is_log_zero(lattice.psi(t, result.states[t]))) violated = true;
    if (t + 1 < length &&
        is_log_zero(lattice.trans(result.states[t], result.states[t + 1]))) {
      violated = true;
    }
  }
  g_decodes_checked.fetch_add(1);
  if (violated) g_decode_violations.fetch_add(1);
  return result;
}

}  // namespace elcrf
