#ifndef ELCRF_MODEL_HPP
#define ELCRF_MODEL_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/featurizer.hpp"
#include "elcrf/label_schema.hpp"
#include "elcrf/potentials.hpp"

namespace elcrf {

struct TrainConfig {
  double learning_rate = 0.01;
  double lr_decay = 0.05;
  double clip_norm = 5.0;
  std::size_t batch_size = 1;  // taken literally: one update per example
  double dropout_p = 0.5;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::size_t factor_size = 20;  // k
  bool full_rank = false;
  std::size_t num_states = 0;  // M; 0 = allocate 3N automatically
  std::size_t emb_dim = 100;
  std::size_t window = 2;
  std::uint64_t seed = 1;
  TagScheme scheme = TagScheme::kIob;
  bool digit_normalize = true;
  std::vector<std::string> fixed_labels;  // empty = infer from data

  void validate() const;  // throws ConfigError
};

/// Everything a trained model needs to tag: schema, state space, transition
/// factors, featurizer parameters, and the config it was trained with.
struct ModelParams {
  static constexpr std::uint32_t kFormatVersion = 1;

  LabelSchema schema;
  StateSpace states;
  TransitionFactors transitions;
  ConstraintMask mask;
  FeaturizerParams featurizer;
  TrainConfig config;

  std::size_t num_states() const { return states.num_states; }
  std::size_t num_labels() const { return schema.size(); }
};

/// Builds an untrained model: schema from the gold sequences (or
/// config.fixed_labels), state allocation, masks, random parameters.
ModelParams init_model(const TrainConfig& config,
                       std::span<const std::vector<std::string>> tokens,
                       std::span<const std::vector<std::string>> labels);

/// Versioned binary serialization; round-trips bit-exactly. Loading a
/// stream with a bad magic or unknown version throws FormatError.
void save_model(const ModelParams& params, std::ostream& out);
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(std::istream& in);
ModelParams load_model(const std::string& path);

}  // namespace elcrf

#endif  // ELCRF_MODEL_HPP
