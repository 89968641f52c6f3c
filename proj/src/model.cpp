#include "elcrf/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace elcrf {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
  if (lr_decay < 0.0) throw ConfigError("learning-rate decay must be >= 0");
  if (clip_norm <= 0.0) throw ConfigError("clip norm must be > 0");
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1)");
  }
  if (!full_rank && factor_size == 0) {
    throw ConfigError("factor size k must be >= 1 (or use full rank)");
  }
  if (batch_size != 1) {
    throw ConfigError("only batch size 1 is supported");
  }
  if (emb_dim == 0) throw ConfigError("embedding dimension must be >= 1");
}

ModelParams init_model(const TrainConfig& config,
                       std::span<const std::vector<std::string>> tokens,
                       std::span<const std::vector<std::string>> labels) {
  config.validate();
  ModelParams params;
  params.config = config;
  if (config.fixed_labels.empty()) {
    params.schema = infer_schema(labels, config.scheme);
  } else {
    params.schema =
        schema_from_label_list(config.fixed_labels, labels, config.scheme);
  }
  std::size_t m = config.num_states == 0 ? 3 * params.schema.size()
                                         : config.num_states;
  params.states = allocate_states(params.schema, m);
  params.mask = ConstraintMask::from_schema(params.schema, params.states);

  Rng rng(mix_seed(config.seed, 0x696E6974ULL));
  params.transitions =
      config.full_rank
          ? TransitionFactors::random_full_rank(m, rng)
          : TransitionFactors::random_factorized(m, config.factor_size, rng);

  std::vector<std::string> corpus_tokens;
  for (const auto& sequence : tokens) {
    corpus_tokens.insert(corpus_tokens.end(), sequence.begin(),
                         sequence.end());
  }
  params.featurizer =
      FeaturizerParams::init(std::move(corpus_tokens), config.emb_dim,
                             config.window, m, config.dropout_p, rng);
  return params;
}

namespace {

constexpr char kMagic[8] = {'E', 'L', 'C', 'R', 'F', 'M', 'D', 'L'};

void write_u64(std::ostream& out, std::uint64_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

void write_u32(std::ostream& out, std::uint32_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

void write_f64(std::ostream& out, double value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

void write_string(std::ostream& out, const std::string& value) {
  write_u64(out, value.size());
  out.write(value.data(), static_cast<std::streamsize>(value.size()));
}

void write_matrix(std::ostream& out, const Matrix& matrix) {
  write_u64(out, matrix.rows());
  write_u64(out, matrix.cols());
  out.write(reinterpret_cast<const char*>(matrix.data()),
            static_cast<std::streamsize>(matrix.size() * sizeof(double)));
}

void write_f64_vector(std::ostream& out, const std::vector<double>& values) {
  write_u64(out, values.size());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw FormatError("model file truncated");
  return value;
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw FormatError("model file truncated");
  return value;
}

double read_f64(std::istream& in) {
  double value = 0.0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw FormatError("model file truncated");
  return value;
}

std::string read_string(std::istream& in) {
  std::uint64_t size = read_u64(in);
  if (size > (1ULL << 32)) throw FormatError("model file corrupt: bad string");
  std::string value(size, '\0');
  in.read(value.data(), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("model file truncated");
  return value;
}

Matrix read_matrix(std::istream& in) {
  std::uint64_t rows = read_u64(in);
  std::uint64_t cols = read_u64(in);
  if (rows > (1ULL << 24) || cols > (1ULL << 24)) {
    throw FormatError("model file corrupt: bad matrix shape");
  }
  Matrix matrix(rows, cols);
  in.read(reinterpret_cast<char*>(matrix.data()),
          static_cast<std::streamsize>(matrix.size() * sizeof(double)));
  if (!in) throw FormatError("model file truncated");
  return matrix;
}

std::vector<double> read_f64_vector(std::istream& in) {
  std::uint64_t size = read_u64(in);
  if (size > (1ULL << 32)) throw FormatError("model file corrupt: bad vector");
  std::vector<double> values(size, 0.0);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(size * sizeof(double)));
  if (!in) throw FormatError("model file truncated");
  return values;
}

}  // namespace

void save_model(const ModelParams& params, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, ModelParams::kFormatVersion);

  // Schema
  write_u32(out, params.schema.scheme() == TagScheme::kIob ? 0 : 1);
  write_u64(out, params.schema.size());
  for (std::size_t i = 0; i < params.schema.size(); ++i) {
    write_string(out, params.schema.label(i));
    write_u64(out, static_cast<std::uint64_t>(params.schema.entity_count(i)));
  }

  // State space
  write_u64(out, params.states.num_states);
  for (const auto& [begin, end] : params.states.label_to_states) {
    write_u64(out, begin);
    write_u64(out, end);
  }

  // Transitions
  write_u32(out,
            params.transitions.mode == TransitionFactors::Mode::kFactorized
                ? 0
                : 1);
  write_u64(out, params.transitions.rank);
  if (params.transitions.mode == TransitionFactors::Mode::kFactorized) {
    write_matrix(out, params.transitions.u);
    write_matrix(out, params.transitions.v);
  } else {
    write_matrix(out, params.transitions.full);
  }

  // Featurizer
  write_u64(out, params.featurizer.vocab_tokens.size());
  for (const auto& token : params.featurizer.vocab_tokens) {
    write_string(out, token);
  }
  write_u64(out, params.featurizer.emb_dim);
  write_u64(out, params.featurizer.window);
  write_f64(out, params.featurizer.dropout_p);
  write_matrix(out, params.featurizer.embeddings);
  write_matrix(out, params.featurizer.weights);
  write_f64_vector(out, params.featurizer.bias);

  // Config
  const TrainConfig& config = params.config;
  write_f64(out, config.learning_rate);
  write_f64(out, config.lr_decay);
  write_f64(out, config.clip_norm);
  write_u64(out, config.batch_size);
  write_f64(out, config.dropout_p);
  write_u64(out, config.max_epochs);
  write_u64(out, config.patience);
  write_u64(out, config.factor_size);
  write_u32(out, config.full_rank ? 1 : 0);
  write_u64(out, config.num_states);
  write_u64(out, config.emb_dim);
  write_u64(out, config.window);
  write_u64(out, config.seed);
  write_u32(out, config.scheme == TagScheme::kIob ? 0 : 1);
  write_u32(out, config.digit_normalize ? 1 : 0);

  if (!out) throw FormatError("failed to write model stream");
}

ModelParams load_model(std::istream& in) {
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a model file (bad magic)");
  }
  std::uint32_t version = read_u32(in);
  if (version != ModelParams::kFormatVersion) {
    throw FormatError("unsupported model format version " +
                      std::to_string(version));
  }

  ModelParams params;
  TagScheme scheme = read_u32(in) == 0 ? TagScheme::kIob : TagScheme::kIobes;
  std::uint64_t num_labels = read_u64(in);
  if (num_labels == 0 || num_labels > (1ULL << 24)) {
    throw FormatError("model file corrupt: bad label count");
  }
  std::vector<std::string> labels;
  std::vector<std::int64_t> counts;
  labels.reserve(num_labels);
  counts.reserve(num_labels);
  for (std::uint64_t i = 0; i < num_labels; ++i) {
    labels.push_back(read_string(in));
    counts.push_back(static_cast<std::int64_t>(read_u64(in)));
  }
  params.schema = LabelSchema::from_labels(std::move(labels),
                                           std::move(counts), scheme);

  params.states.num_states = read_u64(in);
  params.states.label_to_states.reserve(num_labels);
  for (std::uint64_t i = 0; i < num_labels; ++i) {
    std::size_t begin = read_u64(in);
    std::size_t end = read_u64(in);
    params.states.label_to_states.emplace_back(begin, end);
  }
  params.states.state_to_label.assign(params.states.num_states, 0);
  for (std::size_t label = 0; label < num_labels; ++label) {
    auto [begin, end] = params.states.label_to_states[label];
    if (begin > end || end > params.states.num_states) {
      throw FormatError("model file corrupt: bad state range");
    }
    for (std::size_t state = begin; state < end; ++state) {
      params.states.state_to_label[state] = label;
    }
  }
  params.mask = ConstraintMask::from_schema(params.schema, params.states);

  std::uint32_t mode = read_u32(in);
  params.transitions.mode = mode == 0 ? TransitionFactors::Mode::kFactorized
                                      : TransitionFactors::Mode::kFullRank;
  params.transitions.num_states = params.states.num_states;
  params.transitions.rank = read_u64(in);
  if (params.transitions.mode == TransitionFactors::Mode::kFactorized) {
    params.transitions.u = read_matrix(in);
    params.transitions.v = read_matrix(in);
  } else {
    params.transitions.full = read_matrix(in);
  }

  std::uint64_t vocab_size = read_u64(in);
  if (vocab_size < 2 || vocab_size > (1ULL << 32)) {
    throw FormatError("model file corrupt: bad vocab size");
  }
  params.featurizer.vocab_tokens.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    std::string token = read_string(in);
    params.featurizer.vocab.emplace(token, i);
    params.featurizer.vocab_tokens.push_back(std::move(token));
  }
  params.featurizer.emb_dim = read_u64(in);
  params.featurizer.window = read_u64(in);
  params.featurizer.dropout_p = read_f64(in);
  params.featurizer.embeddings = read_matrix(in);
  params.featurizer.weights = read_matrix(in);
  params.featurizer.bias = read_f64_vector(in);

  TrainConfig& config = params.config;
  config.learning_rate = read_f64(in);
  config.lr_decay = read_f64(in);
  config.clip_norm = read_f64(in);
  config.batch_size = read_u64(in);
  config.dropout_p = read_f64(in);
  config.max_epochs = read_u64(in);
  config.patience = read_u64(in);
  config.factor_size = read_u64(in);
  config.full_rank = read_u32(in) != 0;
  config.num_states = read_u64(in);
  config.emb_dim = read_u64(in);
  config.window = read_u64(in);
  config.seed = read_u64(in);
  config.scheme = read_u32(in) == 0 ? TagScheme::kIob : TagScheme::kIobes;
  config.digit_normalize = read_u32(in) != 0;
  return params;
}

void save_model(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open model file for writing: " + path);
  save_model(params, out);
  if (!out) throw FormatError("failed to write model file: " + path);
}

ModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  return load_model(in);
}

}  // namespace elcrf
