#ifndef ELCRF_DATA_EVAL_HPP
#define ELCRF_DATA_EVAL_HPP

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "elcrf/common.hpp"
#include "elcrf/label_schema.hpp"

namespace elcrf {

struct Sequence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::size_t doc_id = 0;
  std::string meta;  // generator provenance, e.g. the planted constraint
};

struct Corpus {
  std::vector<Sequence> sequences;
  std::string provenance;

  std::size_t size() const { return sequences.size(); }
  bool empty() const { return sequences.empty(); }
  std::size_t num_documents() const;
};

struct ConllReadOptions {
  bool digit_normalize = false;
  std::string doc_separator = "-DOCSTART-";
};

/// Reads whitespace-separated token lines (first column = token, last =
/// label) with blank-line sequence separators. Lines whose first column is
/// the document separator delimit documents; without separators each
/// sequence is its own document. Throws FormatError (with line number) on a
/// single-column line.
Corpus read_conll(std::istream& in, const ConllReadOptions& options = {});

void write_conll(const Corpus& corpus, std::ostream& out);

/// A labeled span [begin, end) with its full hierarchical type.
struct Chunk {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string type;

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// conlleval-compatible segmentation: a chunk starts at B-X (or S-X), at an
/// I-X/E-X that does not continue an open X segment, and ends when the
/// continuation stops. Defined for arbitrary (also ill-formed) sequences.
std::vector<Chunk> extract_chunks(std::span<const std::string> labels,
                                  TagScheme scheme = TagScheme::kIob);

struct EntityScore {
  std::string type;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  double precision() const;
  double recall() const;
  double f1() const;
};

/// Field-level scores; a predicted chunk counts only on an exact span and
/// full-type match. Percentages in [0, 100].
struct ChunkF1Report {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
  std::vector<EntityScore> per_entity;  // sorted by type

  double precision() const;
  double recall() const;
  double f1() const;
};

ChunkF1Report chunk_f1(std::span<const std::vector<std::string>> gold,
                       std::span<const std::vector<std::string>> pred,
                       TagScheme scheme = TagScheme::kIob);

void print_report(const ChunkF1Report& report, std::ostream& out);
void print_report_kv(const ChunkF1Report& report, std::ostream& out);

enum class ConstraintKind {
  kAtMostOnce,
  kExactlyOnce,
  kCoOccurrence,
  kFirstOccurrenceOnly
};

const char* constraint_kind_name(ConstraintKind kind);
ConstraintKind constraint_kind_from_name(const std::string& name);

/// Recipe for a corpus with a planted non-local constraint. Trigger tokens
/// are shared between the constrained and distractor labels, drawn from the
/// same pool with identical context distributions, so the correct label is
/// locally ambiguous and only the global constraint disambiguates.
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::kAtMostOnce;
  std::string constrained_type = "status";
  std::string distractor_type = "other";
  std::string anchor_type = "anchor";  // co-occurrence partner
  std::vector<std::string> trigger_tokens;
  std::vector<std::string> filler_tokens;
  std::vector<std::string> anchor_tokens;
  std::size_t min_length = 12;
  std::size_t max_length = 18;
  /// Weight of sequences with 0, 1, 2, ... trigger slots.
  std::vector<double> trigger_count_weights = {0.2, 0.4, 0.4};
  std::size_t trigger_chunk_len = 2;  // tokens per trigger chunk
  std::size_t min_trigger_gap = 5;    // fillers between chunks
  std::size_t max_trigger_gap = 0;    // 0 = unrestricted
  std::size_t edge_margin = 3;        // keeps padding out of trigger windows

  static ConstraintSpec defaults(ConstraintKind kind);
};

/// Emits n sequences whose gold labels obey the planted constraint by
/// construction. Throws ConfigError on an unsatisfiable spec.
Corpus generate_constraint_corpus(const ConstraintSpec& spec,
                                  std::size_t n_sequences,
                                  std::uint64_t seed);

/// Independent scan counting sequences that violate the planted constraint.
std::size_t count_constraint_violations(const ConstraintSpec& spec,
                                        const Corpus& corpus);
std::size_t count_constraint_violations(
    const ConstraintSpec& spec,
    std::span<const std::vector<std::string>> label_sequences);

}  // namespace elcrf

#endif  // ELCRF_DATA_EVAL_HPP
