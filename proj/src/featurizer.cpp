#include "elcrf/featurizer.hpp"

#include <cmath>
#include <sstream>

namespace elcrf {

std::size_t FeaturizerParams::token_index(const std::string& token) const {
  auto it = vocab.find(token);
  return it == vocab.end() ? kUnkIndex : it->second;
}

FeaturizerParams FeaturizerParams::init(std::vector<std::string> corpus_tokens,
                                        std::size_t emb_dim,
                                        std::size_t window,
                                        std::size_t num_scores,
                                        double dropout_p, Rng& rng) {
  if (emb_dim == 0) throw ConfigError("embedding dimension must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1)");
  }
  FeaturizerParams params;
  params.emb_dim = emb_dim;
  params.window = window;
  params.dropout_p = dropout_p;
  params.vocab_tokens = {"<pad>", "<unk>"};
  for (auto& token : corpus_tokens) {
    if (params.vocab.count(token) == 0 && token != "<pad>" &&
        token != "<unk>") {
      params.vocab.emplace(token, params.vocab_tokens.size());
      params.vocab_tokens.push_back(std::move(token));
    }
  }
  params.vocab.emplace("<pad>", kPadIndex);
  params.vocab.emplace("<unk>", kUnkIndex);

  params.embeddings = Matrix(params.vocab_tokens.size(), emb_dim);
  double emb_scale = 0.5 / static_cast<double>(emb_dim);
  for (double& value : params.embeddings.values()) {
    value = rng.uniform(-emb_scale, emb_scale);
  }
  const std::size_t d = params.feature_dim();
  params.weights = Matrix(num_scores, d);
  double w_scale = std::sqrt(6.0 / static_cast<double>(num_scores + d));
  for (double& value : params.weights.values()) {
    value = rng.uniform(-w_scale, w_scale);
  }
  params.bias.assign(num_scores, 0.0);
  return params;
}

Matrix featurize(std::span<const std::string> tokens,
                 const FeaturizerParams& params, bool training_mode,
                 std::uint64_t rng_seed, FeaturizeCache* cache) {
  if (tokens.empty()) {
    throw std::invalid_argument("featurize: empty token sequence");
  }
  const std::size_t length = tokens.size();
  const std::size_t d = params.feature_dim();
  const std::size_t m = params.num_scores();
  const auto w = static_cast<std::ptrdiff_t>(params.window);

  std::vector<std::size_t> token_ids(length);
  for (std::size_t t = 0; t < length; ++t) {
    token_ids[t] = params.token_index(tokens[t]);
  }

  bool use_dropout = training_mode && params.dropout_p > 0.0;
  Matrix drop_scale;
  if (use_dropout) {
    // Inverted dropout on embedding components, pre-concatenation.
    drop_scale = Matrix(length, d);
    Rng rng(rng_seed);
    double keep_scale = 1.0 / (1.0 - params.dropout_p);
    for (double& value : drop_scale.values()) {
      value = rng.uniform() < params.dropout_p ? 0.0 : keep_scale;
    }
  }

  Matrix features(length, d);
  for (std::size_t t = 0; t < length; ++t) {
    std::size_t offset = 0;
    for (std::ptrdiff_t rel = -w; rel <= w; ++rel, offset += params.emb_dim) {
      std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) + rel;
      std::size_t row =
          (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length))
              ? FeaturizerParams::kPadIndex
              : token_ids[static_cast<std::size_t>(pos)];
      for (std::size_t c = 0; c < params.emb_dim; ++c) {
        double value = params.embeddings(row, c);
        if (use_dropout) value *= drop_scale(t, offset + c);
        features(t, offset + c) = value;
      }
    }
  }

  Matrix psi(length, m);
  for (std::size_t t = 0; t < length; ++t) {
    std::span<const double> f = features.row(t);
    for (std::size_t z = 0; z < m; ++z) {
      double score = params.bias[z];
      std::span<const double> w_row = params.weights.row(z);
      for (std::size_t c = 0; c < d; ++c) score += w_row[c] * f[c];
      psi(t, z) = score;
    }
  }

  if (cache != nullptr) {
    cache->token_ids = std::move(token_ids);
    cache->features = std::move(features);
    cache->drop_scale = std::move(drop_scale);
  }
  return psi;
}

std::string normalize_digits(const std::string& token) {
  std::string result = token;
  for (char& c : result) {
    if (c >= '0' && c <= '9') c = '0';
  }
  return result;
}

std::size_t load_pretrained_embeddings(std::istream& in,
                                       FeaturizerParams& params) {
  std::size_t matched = 0;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    values.reserve(params.emb_dim);
    double value = 0.0;
    while (fields >> value) values.push_back(value);
    if (values.size() != params.emb_dim) {
      throw FormatError("embedding line " + std::to_string(line_number) +
                        ": expected " + std::to_string(params.emb_dim) +
                        " values, got " + std::to_string(values.size()));
    }
    auto it = params.vocab.find(token);
    if (it == params.vocab.end()) continue;
    for (std::size_t c = 0; c < params.emb_dim; ++c) {
      params.embeddings(it->second, c) = values[c];
    }
    ++matched;
  }
  return matched;
}

void featurizer_backprop(const FeaturizerParams& params,
                         const FeaturizeCache& cache, const Matrix& d_psi,
                         FeaturizerGradients& grads) {
  const std::size_t length = cache.features.rows();
  const std::size_t d = params.feature_dim();
  const std::size_t m = params.num_scores();
  if (d_psi.rows() != length || d_psi.cols() != m) {
    throw std::invalid_argument("featurizer_backprop: d_psi shape mismatch");
  }
  if (grads.d_weights.empty()) {
    grads.d_embeddings = Matrix(params.embeddings.rows(), params.emb_dim);
    grads.d_weights = Matrix(m, d);
    grads.d_bias.assign(m, 0.0);
  }

  const auto w = static_cast<std::ptrdiff_t>(params.window);
  bool dropped = !cache.drop_scale.empty();
  std::vector<double> d_feature(d);
  for (std::size_t t = 0; t < length; ++t) {
    std::span<const double> g = d_psi.row(t);
    std::span<const double> f = cache.features.row(t);
    for (std::size_t z = 0; z < m; ++z) {
      double gz = g[z];
      if (gz == 0.0) continue;
      grads.d_bias[z] += gz;
      std::span<double> dw = grads.d_weights.row(z);
      for (std::size_t c = 0; c < d; ++c) dw[c] += gz * f[c];
    }
    // d_feature = W^T g, then scatter into the embedding rows through the
    // dropout multipliers.
    std::fill(d_feature.begin(), d_feature.end(), 0.0);
    for (std::size_t z = 0; z < m; ++z) {
      double gz = g[z];
      if (gz == 0.0) continue;
      std::span<const double> w_row = params.weights.row(z);
      for (std::size_t c = 0; c < d; ++c) d_feature[c] += gz * w_row[c];
    }
    std::size_t offset = 0;
    for (std::ptrdiff_t rel = -w; rel <= w; ++rel, offset += params.emb_dim) {
      std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t) + rel;
      std::size_t row =
          (pos < 0 || pos >= static_cast<std::ptrdiff_t>(length))
              ? FeaturizerParams::kPadIndex
              : cache.token_ids[static_cast<std::size_t>(pos)];
      for (std::size_t c = 0; c < params.emb_dim; ++c) {
        double scale = dropped ? cache.drop_scale(t, offset + c) : 1.0;
        if (scale != 0.0) {
          grads.d_embeddings(row, c) += scale * d_feature[offset + c];
        }
      }
    }
  }
}

}  // namespace elcrf
