#ifndef ELCRF_LABEL_SCHEMA_HPP
#define ELCRF_LABEL_SCHEMA_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "elcrf/common.hpp"

namespace elcrf {

enum class TagScheme { kIob, kIobes };

enum class TagPrefix { kOutside, kBegin, kInside, kEnd, kSingle };

/// A label decomposed into its segmentation prefix and hierarchical type.
struct ParsedLabel {
  TagPrefix prefix = TagPrefix::kOutside;
  std::string type;                // full path string, empty for O
  std::vector<std::string> path;   // path segments, empty for O
};

/// Splits a hierarchical type string ("venue/editor/person") into segments.
/// The outside label "O" yields an empty path. Empty segments are rejected.
std::vector<std::string> parse_hierarchical_label(const std::string& raw);

/// Parses a full tag ("B-venue/date", "I-title", "O") under the given scheme.
ParsedLabel parse_label(const std::string& raw, TagScheme scheme);

const char* tag_scheme_name(TagScheme scheme);
TagScheme tag_scheme_from_name(const std::string& name);

/// The output label space: identifiers, hierarchy paths, corpus entity
/// counts, and the tagging scheme. Immutable after construction.
class LabelSchema {
 public:
  LabelSchema() = default;

  static LabelSchema from_labels(std::vector<std::string> labels,
                                 std::vector<std::int64_t> entity_counts,
                                 TagScheme scheme);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  const ParsedLabel& parsed(std::size_t i) const { return parsed_[i]; }
  std::int64_t entity_count(std::size_t i) const { return entity_counts_[i]; }
  const std::vector<std::int64_t>& entity_counts() const {
    return entity_counts_;
  }
  TagScheme scheme() const { return scheme_; }

  /// Index of a label, or -1 when absent.
  int find(const std::string& label) const;

  /// Index of a label; throws SchemaError when absent.
  std::size_t index_of(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::vector<ParsedLabel> parsed_;
  std::vector<std::int64_t> entity_counts_;
  std::unordered_map<std::string, std::size_t> index_;
  TagScheme scheme_ = TagScheme::kIob;
};

/// Builds a schema from gold label sequences: labels in canonical order
/// (O first, then by type path and prefix), entity counts from chunk counts.
LabelSchema infer_schema(std::span<const std::vector<std::string>> sequences,
                         TagScheme scheme);

/// Builds a schema with a fixed label list (file order preserved); entity
/// counts are still taken from the data. Labels seen in the data but missing
/// from the list are an error.
LabelSchema schema_from_label_list(
    std::vector<std::string> labels,
    std::span<const std::vector<std::string>> sequences, TagScheme scheme);

/// The latent state space: M states, each owned by exactly one label,
/// with contiguous per-label index ranges.
struct StateSpace {
  std::size_t num_states = 0;
  std::vector<std::size_t> state_to_label;
  std::vector<std::pair<std::size_t, std::size_t>> label_to_states;

  std::size_t label_of(std::size_t state) const {
    return state_to_label[state];
  }
  std::pair<std::size_t, std::size_t> states_of(std::size_t label) const {
    return label_to_states[label];
  }
};

/// Apportions M states to labels proportionally to entity counts:
/// one reserved state per label, the remaining M - N seats by largest
/// remainder, remainder ties broken by label order. Throws SchemaError
/// when M < N or all entity counts are zero.
StateSpace allocate_states(const LabelSchema& schema, std::size_t num_states);

/// Whether `next` may follow `prev` under the scheme's segmentation rules
/// plus hierarchical consistency (an inside tag continues only a segment
/// with the identical full path).
bool transition_allowed(const ParsedLabel& prev, const ParsedLabel& next,
                        TagScheme scheme);

/// String-level wrapper; throws SchemaError on labels absent from the schema.
bool iob_transition_allowed(const std::string& prev, const std::string& next,
                            const LabelSchema& schema);

}  // namespace elcrf

#endif  // ELCRF_LABEL_SCHEMA_HPP
