#ifndef ELCRF_TRAINING_HPP
#define ELCRF_TRAINING_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elcrf/data_eval.hpp"
#include "elcrf/featurizer.hpp"
#include "elcrf/inference.hpp"
#include "elcrf/model.hpp"

namespace elcrf {

struct NllOptions {
  bool training_mode = false;
  std::uint64_t dropout_seed = 0;
};

/// -(clamped log-score - log Z) >= 0; nullopt when the gold sequence is
/// infeasible under the hard constraints (the example must be skipped).
std::optional<double> sequence_nll(const ModelParams& params,
                                   std::span<const std::string> tokens,
                                   std::span<const std::string> gold,
                                   const NllOptions& options = {});

struct SequenceGradients {
  double nll = 0.0;
  Matrix d_u;     // factorized mode
  Matrix d_v;
  Matrix d_full;  // full-rank mode
  FeaturizerGradients feat;
};

/// Free-minus-clamped expected occupancies, mapped through the low-rank
/// chain rule and the affine featurizer. nullopt on infeasible gold.
std::optional<SequenceGradients> sequence_gradients(
    const ModelParams& params, std::span<const std::string> tokens,
    std::span<const std::string> gold, const NllOptions& options = {});

/// Global L2 norm over every tensor in the gradient set.
double gradient_global_norm(const SequenceGradients& grads);

/// Scales all gradients by clip_norm / g when the global norm g exceeds
/// clip_norm; otherwise leaves them unchanged.
void clip_gradients(SequenceGradients& grads, double clip_norm);
void clip_gradients(std::span<double> flat, double clip_norm);

/// One SGD step: params -= lr * grads.
void apply_gradients(ModelParams& params, const SequenceGradients& grads,
                     double learning_rate);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_nll = 0.0;
  double dev_f1 = 0.0;  // NaN when no dev set
  double learning_rate = 0.0;
  std::size_t skipped = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> log;
  double best_dev_f1 = 0.0;
  std::size_t best_epoch = 0;
};

/// Per-example SGD with lr_e = lr / (1 + decay * e), seeded epoch shuffling,
/// gradient clipping, per-epoch dev chunk-F1 early stopping (best-parameter
/// keeping), and skip-with-warning on infeasible gold sequences.
TrainResult train(const TrainConfig& config, const Corpus& train_corpus,
                  const Corpus* dev_corpus = nullptr,
                  std::istream* pretrained_embeddings = nullptr,
                  std::ostream* warnings = nullptr);

/// Viterbi labels for one sequence (evaluation mode).
std::vector<std::string> tag_sequence(const ModelParams& params,
                                      std::span<const std::string> tokens);

/// Decodes a whole corpus; deterministic regardless of the worker count.
std::vector<std::vector<std::string>> tag_corpus(const ModelParams& params,
                                                 const Corpus& corpus,
                                                 std::size_t jobs = 1);

/// Trains one model per held-out document and scores the merged decodes.
ChunkF1Report loo_cross_validate(const TrainConfig& config,
                                 const Corpus& corpus, std::size_t jobs = 1,
                                 std::ostream* warnings = nullptr);

}  // namespace elcrf

#endif  // ELCRF_TRAINING_HPP
