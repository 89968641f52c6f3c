#include "elcrf/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

namespace elcrf {

namespace {

std::vector<std::size_t> resolve_gold(const LabelSchema& schema,
                                      std::span<const std::string> gold) {
  std::vector<std::size_t> indices;
  indices.reserve(gold.size());
  for (const auto& label : gold) indices.push_back(schema.index_of(label));
  return indices;
}

struct PassResult {
  Matrix psi;
  Matrix trans;
  double log_z_free = 0.0;
  double log_score_clamped = 0.0;
  InferenceResult free;
  InferenceResult clamped;
  Matrix folded;
  FeaturizeCache cache;
  bool feasible = false;
};

PassResult run_passes(const ModelParams& params,
                      std::span<const std::string> tokens,
                      std::span<const std::string> gold,
                      const NllOptions& options, bool with_marginals) {
  if (tokens.size() != gold.size()) {
    throw std::invalid_argument("token / gold length mismatch");
  }
  PassResult pass;
  std::vector<std::size_t> gold_indices = resolve_gold(params.schema, gold);
  pass.psi = featurize(tokens, params.featurizer, options.training_mode,
                       options.dropout_seed, &pass.cache);
  pass.trans = effective_transition_matrix(params.transitions, params.mask);
  Lattice free_lattice(pass.psi, pass.trans);
  pass.folded = fold_output_potential(pass.psi, gold_indices, params.states);
  Lattice clamped_lattice(pass.folded, pass.trans);
  if (with_marginals) {
    pass.free = marginals(free_lattice);
    pass.clamped = marginals(clamped_lattice);
    pass.log_z_free = pass.free.log_z;
    pass.log_score_clamped = pass.clamped.log_z;
  } else {
    pass.log_z_free = forward_log_partition(free_lattice);
    pass.log_score_clamped = forward_log_partition(clamped_lattice);
  }
  pass.feasible = !is_log_zero(pass.log_score_clamped);
  return pass;
}

}  // namespace

std::optional<double> sequence_nll(const ModelParams& params,
                                   std::span<const std::string> tokens,
                                   std::span<const std::string> gold,
                                   const NllOptions& options) {
  PassResult pass = run_passes(params, tokens, gold, options, false);
  if (!pass.feasible) return std::nullopt;
  return pass.log_z_free - pass.log_score_clamped;
}

std::optional<SequenceGradients> sequence_gradients(
    const ModelParams& params, std::span<const std::string> tokens,
    std::span<const std::string> gold, const NllOptions& options) {
  PassResult pass = run_passes(params, tokens, gold, options, true);
  if (!pass.feasible) return std::nullopt;

  const std::size_t length = tokens.size();
  const std::size_t m = params.num_states();
  SequenceGradients grads;
  grads.nll = pass.log_z_free - pass.log_score_clamped;

  // dNLL/dpsi = free expected occupancy - clamped expected occupancy.
  Matrix d_psi(length, m);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t z = 0; z < m; ++z) {
      d_psi(t, z) =
          pass.free.node_marginals(t, z) - pass.clamped.node_marginals(t, z);
    }
  }

  // dNLL/dA accumulated over positions; masked entries are not a function of
  // the factors, so they stay zero. Edge marginals are formed on the fly.
  Matrix d_trans(m, m);
  Lattice free_lattice(pass.psi, pass.trans);
  Lattice clamped_lattice(pass.folded, pass.trans);
  for (std::size_t t = 0; t + 1 < length; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (!params.mask.allowed(i, j)) continue;
        double free_edge = edge_marginal(pass.free, free_lattice, t, i, j);
        double clamped_edge =
            edge_marginal(pass.clamped, clamped_lattice, t, i, j);
        d_trans(i, j) += free_edge - clamped_edge;
      }
    }
  }

  if (params.transitions.mode == TransitionFactors::Mode::kFactorized) {
    const std::size_t rank = params.transitions.rank;
    // dU = V (dA)^T, dV = U dA.
    grads.d_u = Matrix(rank, m);
    grads.d_v = Matrix(rank, m);
    for (std::size_t r = 0; r < rank; ++r) {
      for (std::size_t i = 0; i < m; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          sum += params.transitions.v(r, j) * d_trans(i, j);
        }
        grads.d_u(r, i) = sum;
      }
      for (std::size_t j = 0; j < m; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          sum += params.transitions.u(r, i) * d_trans(i, j);
        }
        grads.d_v(r, j) = sum;
      }
    }
  } else {
    grads.d_full = std::move(d_trans);
  }

  featurizer_backprop(params.featurizer, pass.cache, d_psi, grads.feat);
  return grads;
}

namespace {

template <typename Fn>
void for_each_tensor(SequenceGradients& grads, Fn&& fn) {
  for (Matrix* matrix : {&grads.d_u, &grads.d_v, &grads.d_full,
                         &grads.feat.d_embeddings, &grads.feat.d_weights}) {
    if (!matrix->empty()) fn(matrix->values());
  }
  if (!grads.feat.d_bias.empty()) fn(grads.feat.d_bias);
}

}  // namespace

double gradient_global_norm(const SequenceGradients& grads) {
  double sum_squares = 0.0;
  for_each_tensor(const_cast<SequenceGradients&>(grads),
                  [&](std::vector<double>& values) {
                    for (double v : values) sum_squares += v * v;
                  });
  return std::sqrt(sum_squares);
}

void clip_gradients(SequenceGradients& grads, double clip_norm) {
  if (clip_norm <= 0.0) throw std::invalid_argument("clip norm must be > 0");
  double norm = gradient_global_norm(grads);
  if (norm <= clip_norm) return;
  double scale = clip_norm / norm;
  for_each_tensor(grads, [&](std::vector<double>& values) {
    for (double& v : values) v *= scale;
  });
}

void clip_gradients(std::span<double> flat, double clip_norm) {
  if (clip_norm <= 0.0) throw std::invalid_argument("clip norm must be > 0");
  double sum_squares = 0.0;
  for (double v : flat) sum_squares += v * v;
  double norm = std::sqrt(sum_squares);
  if (norm <= clip_norm) return;
  double scale = clip_norm / norm;
  for (double& v : flat) v *= scale;
}

void apply_gradients(ModelParams& params, const SequenceGradients& grads,
                     double learning_rate) {
  auto step = [&](std::vector<double>& values,
                  const std::vector<double>& gradient) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= learning_rate * gradient[i];
    }
  };
  if (params.transitions.mode == TransitionFactors::Mode::kFactorized) {
    step(params.transitions.u.values(), grads.d_u.values());
    step(params.transitions.v.values(), grads.d_v.values());
  } else {
    step(params.transitions.full.values(), grads.d_full.values());
  }
  step(params.featurizer.embeddings.values(),
       grads.feat.d_embeddings.values());
  step(params.featurizer.weights.values(), grads.feat.d_weights.values());
  step(params.featurizer.bias, grads.feat.d_bias);
}

namespace {

/// Index-sharded parallel loop; the output slots are preassigned, so the
/// result is independent of the worker count.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::size_t workers = std::min(jobs, count);
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = cursor.fetch_add(1); i < count;
             i = cursor.fetch_add(1)) {
          body(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& thread : pool) thread.join();
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
}

std::vector<std::vector<std::string>> corpus_labels(const Corpus& corpus) {
  std::vector<std::vector<std::string>> labels;
  labels.reserve(corpus.size());
  for (const auto& sequence : corpus.sequences) {
    labels.push_back(sequence.labels);
  }
  return labels;
}

double dev_chunk_f1(const ModelParams& params, const Corpus& dev,
                    std::size_t jobs) {
  std::vector<std::vector<std::string>> predictions =
      tag_corpus(params, dev, jobs);
  std::vector<std::vector<std::string>> gold = corpus_labels(dev);
  return chunk_f1(gold, predictions, params.schema.scheme()).f1();
}

}  // namespace

std::vector<std::string> tag_sequence(const ModelParams& params,
                                      std::span<const std::string> tokens) {
  Matrix psi = featurize(tokens, params.featurizer, false, 0);
  Matrix trans = effective_transition_matrix(params.transitions, params.mask);
  ViterbiResult result = viterbi_decode(Lattice(psi, trans), params.states);
  std::vector<std::string> labels;
  labels.reserve(result.labels.size());
  for (std::size_t label : result.labels) {
    labels.push_back(params.schema.label(label));
  }
  return labels;
}

std::vector<std::vector<std::string>> tag_corpus(const ModelParams& params,
                                                 const Corpus& corpus,
                                                 std::size_t jobs) {
  std::vector<std::vector<std::string>> predictions(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) {
    predictions[i] = tag_sequence(params, corpus.sequences[i].tokens);
  });
  return predictions;
}

TrainResult train(const TrainConfig& config, const Corpus& train_corpus,
                  const Corpus* dev_corpus, std::istream* pretrained_embeddings,
                  std::ostream* warnings) {
  config.validate();
  if (train_corpus.empty()) {
    throw ConfigError("training corpus is empty");
  }

  std::vector<std::vector<std::string>> tokens;
  std::vector<std::vector<std::string>> labels;
  tokens.reserve(train_corpus.size());
  labels.reserve(train_corpus.size());
  for (const auto& sequence : train_corpus.sequences) {
    if (sequence.tokens.empty()) {
      throw ConfigError("training corpus contains an empty sequence");
    }
    tokens.push_back(sequence.tokens);
    labels.push_back(sequence.labels);
  }

  TrainResult result;
  result.params = init_model(config, tokens, labels);
  if (pretrained_embeddings != nullptr) {
    load_pretrained_embeddings(*pretrained_embeddings,
                               result.params.featurizer);
  }

  bool have_dev = dev_corpus != nullptr && !dev_corpus->empty();
  ModelParams best_params = result.params;
  double best_f1 = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;

  Rng shuffle_rng(mix_seed(config.seed, 0x7368756666ULL));
  std::vector<std::size_t> order(train_corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    double lr = config.learning_rate /
                (1.0 + config.lr_decay * static_cast<double>(epoch));
    shuffle_rng.shuffle(order);

    double nll_sum = 0.0;
    std::size_t used = 0;
    std::size_t skipped = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      std::size_t index = order[rank];
      NllOptions options;
      options.training_mode = true;
      options.dropout_seed = mix_seed(config.seed, epoch, index);
      auto grads = sequence_gradients(result.params, tokens[index],
                                      labels[index], options);
      if (!grads.has_value()) {
        ++skipped;
        if (warnings != nullptr) {
          *warnings << "warning: skipped sequence " << index << " in epoch "
                    << epoch
                    << ": gold labels are infeasible under the transition "
                       "constraints\n";
        }
        continue;
      }
      nll_sum += grads->nll;
      ++used;
      clip_gradients(*grads, config.clip_norm);
      apply_gradients(result.params, *grads, lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_nll = used == 0 ? 0.0 : nll_sum / static_cast<double>(used);
    stats.learning_rate = lr;
    stats.skipped = skipped;
    stats.dev_f1 = std::numeric_limits<double>::quiet_NaN();
    if (have_dev) {
      stats.dev_f1 = dev_chunk_f1(result.params, *dev_corpus, 1);
      if (stats.dev_f1 > best_f1) {
        best_f1 = stats.dev_f1;
        best_epoch = epoch;
        best_params = result.params;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
    }
    result.log.push_back(stats);
    if (have_dev && epochs_since_best >= config.patience) break;
  }

  if (have_dev && best_f1 >= 0.0) {
    result.params = std::move(best_params);
    result.best_dev_f1 = best_f1;
    result.best_epoch = best_epoch;
  }
  return result;
}

ChunkF1Report loo_cross_validate(const TrainConfig& config,
                                 const Corpus& corpus, std::size_t jobs,
                                 std::ostream* warnings) {
  std::vector<std::size_t> doc_ids;
  for (const auto& sequence : corpus.sequences) {
    if (std::find(doc_ids.begin(), doc_ids.end(), sequence.doc_id) ==
        doc_ids.end()) {
      doc_ids.push_back(sequence.doc_id);
    }
  }
  if (doc_ids.size() < 2) {
    throw ConfigError("leave-one-out requires at least 2 documents");
  }

  // Merged predictions keep corpus order: fold i fills the slots of its
  // held-out document only.
  std::vector<std::vector<std::string>> merged(corpus.size());
  std::ostream* fold_warnings = jobs <= 1 ? warnings : nullptr;
  parallel_for(doc_ids.size(), jobs, [&](std::size_t fold) {
    std::size_t held_out = doc_ids[fold];
    Corpus fold_train;
    Corpus fold_test;
    std::vector<std::size_t> test_slots;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus.sequences[i].doc_id == held_out) {
        fold_test.sequences.push_back(corpus.sequences[i]);
        test_slots.push_back(i);
      } else {
        fold_train.sequences.push_back(corpus.sequences[i]);
      }
    }
    TrainResult fold_result = train(config, fold_train, nullptr, nullptr,
                                    fold_warnings);
    std::vector<std::vector<std::string>> predictions =
        tag_corpus(fold_result.params, fold_test, 1);
    for (std::size_t s = 0; s < test_slots.size(); ++s) {
      merged[test_slots[s]] = std::move(predictions[s]);
    }
  });

  return chunk_f1(corpus_labels(corpus), merged, config.scheme);
}

}  // namespace elcrf
