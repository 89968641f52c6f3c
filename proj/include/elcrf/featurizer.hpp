#ifndef ELCRF_FEATURIZER_HPP
#define ELCRF_FEATURIZER_HPP

#include <cstddef>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/matrix.hpp"

namespace elcrf {

/// Trainable window-embedding featurizer: psi(t, .) = W f_t + b where f_t
/// concatenates the embeddings of the tokens in a window of half-width w
/// around position t. Out-of-range positions use the padding row; unknown
/// tokens map to the unknown row. Inverted dropout masks embedding
/// components before concatenation.
struct FeaturizerParams {
  static constexpr std::size_t kPadIndex = 0;
  static constexpr std::size_t kUnkIndex = 1;

  std::vector<std::string> vocab_tokens;  // index order, [0]=pad, [1]=unk
  std::unordered_map<std::string, std::size_t> vocab;
  std::size_t emb_dim = 0;
  std::size_t window = 0;  // half-width w
  Matrix embeddings;       // |vocab| x emb_dim
  Matrix weights;          // M x (2w+1)*emb_dim
  std::vector<double> bias;
  double dropout_p = 0.0;

  std::size_t feature_dim() const { return (2 * window + 1) * emb_dim; }
  std::size_t num_scores() const { return weights.rows(); }

  std::size_t token_index(const std::string& token) const;

  static FeaturizerParams init(std::vector<std::string> corpus_tokens,
                               std::size_t emb_dim, std::size_t window,
                               std::size_t num_scores, double dropout_p,
                               Rng& rng);
};

/// Intermediates kept from featurize() so gradients reuse the same dropout
/// mask and token ids.
struct FeaturizeCache {
  std::vector<std::size_t> token_ids;  // T
  Matrix features;                     // T x d, dropout already applied
  Matrix drop_scale;                   // T x d multipliers; empty in eval mode
};

/// T x M local log-potentials. Evaluation mode applies no dropout and no
/// rescaling; training mode uses inverted dropout seeded by rng_seed.
Matrix featurize(std::span<const std::string> tokens,
                 const FeaturizerParams& params, bool training_mode,
                 std::uint64_t rng_seed, FeaturizeCache* cache = nullptr);

/// Every decimal digit character replaced by '0'.
std::string normalize_digits(const std::string& token);

/// Reads "token v1 .. v_d" rows; rows naming in-vocab tokens overwrite the
/// corresponding embedding rows. Returns the matched-token count. Throws
/// FormatError (naming the line) on a dimension mismatch.
std::size_t load_pretrained_embeddings(std::istream& in,
                                       FeaturizerParams& params);

struct FeaturizerGradients {
  Matrix d_embeddings;
  Matrix d_weights;
  std::vector<double> d_bias;
};

/// Accumulates dL/dE, dL/dW, dL/db from dL/dpsi (T x M) through the affine
/// head and the cached dropout mask.
void featurizer_backprop(const FeaturizerParams& params,
                         const FeaturizeCache& cache, const Matrix& d_psi,
                         FeaturizerGradients& grads);

}  // namespace elcrf

#endif  // ELCRF_FEATURIZER_HPP
