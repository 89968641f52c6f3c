#include "elcrf/label_schema.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "elcrf/data_eval.hpp"

namespace elcrf {

std::vector<std::string> parse_hierarchical_label(const std::string& raw) {
  if (raw.empty()) {
    throw SchemaError("malformed label: empty label string");
  }
  if (raw == "O") return {};
  std::vector<std::string> path;
  std::size_t start = 0;
  while (true) {
    std::size_t slash = raw.find('/', start);
    std::string segment = raw.substr(
        start, slash == std::string::npos ? std::string::npos : slash - start);
    if (segment.empty()) {
      throw SchemaError("malformed label '" + raw + "': empty path segment");
    }
    path.push_back(std::move(segment));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return path;
}

ParsedLabel parse_label(const std::string& raw, TagScheme scheme) {
  ParsedLabel parsed;
  if (raw == "O") {
    parsed.prefix = TagPrefix::kOutside;
    return parsed;
  }
  if (raw.size() < 2 || raw[1] != '-') {
    throw SchemaError("malformed tag '" + raw +
                      "': expected O or a prefixed tag like B-type");
  }
  switch (raw[0]) {
    case 'B':
      parsed.prefix = TagPrefix::kBegin;
      break;
    case 'I':
      parsed.prefix = TagPrefix::kInside;
      break;
    case 'E':
      if (scheme != TagScheme::kIobes) {
        throw SchemaError("tag '" + raw + "' is not valid under IOB");
      }
      parsed.prefix = TagPrefix::kEnd;
      break;
    case 'S':
      if (scheme != TagScheme::kIobes) {
        throw SchemaError("tag '" + raw + "' is not valid under IOB");
      }
      parsed.prefix = TagPrefix::kSingle;
      break;
    default:
      throw SchemaError("malformed tag '" + raw + "': unknown prefix");
  }
  parsed.type = raw.substr(2);
  parsed.path = parse_hierarchical_label(parsed.type);
  if (parsed.path.empty()) {
    throw SchemaError("malformed tag '" + raw + "': empty type");
  }
  return parsed;
}

const char* tag_scheme_name(TagScheme scheme) {
  return scheme == TagScheme::kIob ? "iob" : "iobes";
}

TagScheme tag_scheme_from_name(const std::string& name) {
  if (name == "iob") return TagScheme::kIob;
  if (name == "iobes") return TagScheme::kIobes;
  throw ConfigError("unknown tagging scheme '" + name + "'");
}

LabelSchema LabelSchema::from_labels(std::vector<std::string> labels,
                                     std::vector<std::int64_t> entity_counts,
                                     TagScheme scheme) {
  if (labels.empty()) {
    throw SchemaError("schema requires at least one label");
  }
  if (labels.size() != entity_counts.size()) {
    throw SchemaError("label / entity-count size mismatch");
  }
  LabelSchema schema;
  schema.scheme_ = scheme;
  schema.labels_ = std::move(labels);
  schema.entity_counts_ = std::move(entity_counts);
  schema.parsed_.reserve(schema.labels_.size());
  for (std::size_t i = 0; i < schema.labels_.size(); ++i) {
    const std::string& label = schema.labels_[i];
    if (schema.index_.count(label) != 0) {
      throw SchemaError("duplicate label '" + label + "'");
    }
    if (schema.entity_counts_[i] < 0) {
      throw SchemaError("negative entity count for label '" + label + "'");
    }
    schema.parsed_.push_back(parse_label(label, scheme));
    schema.index_.emplace(label, i);
  }
  return schema;
}

int LabelSchema::find(const std::string& label) const {
  auto it = index_.find(label);
  return it == index_.end() ? -1 : static_cast<int>(it->second);
}

std::size_t LabelSchema::index_of(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) {
    throw SchemaError("label '" + label + "' is not in the schema");
  }
  return it->second;
}

namespace {

int prefix_rank(TagPrefix prefix) {
  switch (prefix) {
    case TagPrefix::kOutside: return 0;
    case TagPrefix::kBegin: return 1;
    case TagPrefix::kInside: return 2;
    case TagPrefix::kEnd: return 3;
    case TagPrefix::kSingle: return 4;
  }
  return 5;
}

/// Entity counts per type path: chunk counts for real types, maximal-run
/// counts for the outside label (keyed by the empty string).
std::map<std::string, std::int64_t> count_entities(
    std::span<const std::vector<std::string>> sequences, TagScheme scheme) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& labels : sequences) {
    for (const Chunk& chunk : extract_chunks(labels, scheme)) {
      ++counts[chunk.type];
    }
    bool in_outside_run = false;
    for (const auto& label : labels) {
      bool outside = (label == "O");
      if (outside && !in_outside_run) ++counts[""];
      in_outside_run = outside;
    }
  }
  return counts;
}

std::vector<std::int64_t> counts_for_labels(
    const std::vector<std::string>& labels,
    const std::map<std::string, std::int64_t>& type_counts,
    TagScheme scheme) {
  std::vector<std::int64_t> counts;
  counts.reserve(labels.size());
  for (const auto& label : labels) {
    ParsedLabel parsed = parse_label(label, scheme);
    auto it = type_counts.find(parsed.type);
    counts.push_back(it == type_counts.end() ? 0 : it->second);
  }
  return counts;
}

}  // namespace

LabelSchema infer_schema(std::span<const std::vector<std::string>> sequences,
                         TagScheme scheme) {
  std::set<std::string> seen;
  for (const auto& labels : sequences) {
    for (const auto& label : labels) seen.insert(label);
  }
  if (seen.empty()) {
    throw SchemaError("cannot infer a schema from an empty corpus");
  }
  std::vector<std::string> ordered(seen.begin(), seen.end());
  // Canonical order: O first, then by type path, B before I before E/S.
  std::stable_sort(ordered.begin(), ordered.end(),
                   [&](const std::string& a, const std::string& b) {
                     ParsedLabel pa = parse_label(a, scheme);
                     ParsedLabel pb = parse_label(b, scheme);
                     if (pa.type != pb.type) return pa.type < pb.type;
                     return prefix_rank(pa.prefix) < prefix_rank(pb.prefix);
                   });
  auto type_counts = count_entities(sequences, scheme);
  return LabelSchema::from_labels(
      ordered, counts_for_labels(ordered, type_counts, scheme), scheme);
}

LabelSchema schema_from_label_list(
    std::vector<std::string> labels,
    std::span<const std::vector<std::string>> sequences, TagScheme scheme) {
  std::set<std::string> listed(labels.begin(), labels.end());
  for (const auto& sequence : sequences) {
    for (const auto& label : sequence) {
      if (listed.count(label) == 0) {
        throw SchemaError("data label '" + label +
                          "' is missing from the supplied label list");
      }
    }
  }
  auto type_counts = count_entities(sequences, scheme);
  auto counts = counts_for_labels(labels, type_counts, scheme);
  return LabelSchema::from_labels(std::move(labels), std::move(counts),
                                  scheme);
}

StateSpace allocate_states(const LabelSchema& schema, std::size_t num_states) {
  const std::size_t num_labels = schema.size();
  if (num_states < num_labels) {
    throw SchemaError("infeasible allocation: M=" + std::to_string(num_states) +
                      " < N=" + std::to_string(num_labels));
  }
  std::int64_t total = std::accumulate(schema.entity_counts().begin(),
                                       schema.entity_counts().end(),
                                       std::int64_t{0});
  if (total <= 0) {
    throw SchemaError("state allocation requires a positive entity-count sum");
  }

  // One reserved state per label, the remaining seats by largest remainder.
  const std::size_t extra = num_states - num_labels;
  std::vector<std::size_t> seats(num_labels, 1);
  std::vector<double> remainders(num_labels);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < num_labels; ++i) {
    double quota = static_cast<double>(extra) *
                   static_cast<double>(schema.entity_count(i)) /
                   static_cast<double>(total);
    auto base = static_cast<std::size_t>(std::floor(quota));
    seats[i] += base;
    remainders[i] = quota - static_cast<double>(base);
    assigned += base;
  }
  std::vector<std::size_t> order(num_labels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return remainders[a] > remainders[b];
                   });
  for (std::size_t i = 0; assigned < extra; ++i, ++assigned) {
    ++seats[order[i]];
  }

  StateSpace states;
  states.num_states = num_states;
  states.state_to_label.reserve(num_states);
  states.label_to_states.reserve(num_labels);
  for (std::size_t label = 0; label < num_labels; ++label) {
    std::size_t begin = states.state_to_label.size();
    states.state_to_label.insert(states.state_to_label.end(), seats[label],
                                 label);
    states.label_to_states.emplace_back(begin, states.state_to_label.size());
  }
  return states;
}

bool transition_allowed(const ParsedLabel& prev, const ParsedLabel& next,
                        TagScheme scheme) {
  if (scheme == TagScheme::kIob) {
    if (next.prefix != TagPrefix::kInside) return true;
    return (prev.prefix == TagPrefix::kBegin ||
            prev.prefix == TagPrefix::kInside) &&
           prev.type == next.type;
  }
  // IOBES: B/I must be followed by I/E of the identical type; O/E/S close a
  // segment and may be followed only by O/B/S.
  bool prev_open = prev.prefix == TagPrefix::kBegin ||
                   prev.prefix == TagPrefix::kInside;
  bool next_continues = next.prefix == TagPrefix::kInside ||
                        next.prefix == TagPrefix::kEnd;
  if (prev_open) return next_continues && prev.type == next.type;
  return !next_continues;
}

bool iob_transition_allowed(const std::string& prev, const std::string& next,
                            const LabelSchema& schema) {
  std::size_t prev_index = schema.index_of(prev);
  std::size_t next_index = schema.index_of(next);
  return transition_allowed(schema.parsed(prev_index),
                            schema.parsed(next_index), schema.scheme());
}

}  // namespace elcrf
