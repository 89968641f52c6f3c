#include "elcrf/data_eval.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "elcrf/featurizer.hpp"

namespace elcrf {

std::size_t Corpus::num_documents() const {
  std::set<std::size_t> ids;
  for (const auto& sequence : sequences) ids.insert(sequence.doc_id);
  return ids.size();
}

Corpus read_conll(std::istream& in, const ConllReadOptions& options) {
  Corpus corpus;
  Sequence current;
  std::size_t line_number = 0;
  std::size_t doc_counter = 0;
  bool saw_separator = false;

  auto flush_sequence = [&]() {
    if (current.tokens.empty()) return;
    current.doc_id = doc_counter;
    corpus.sequences.push_back(std::move(current));
    current = Sequence{};
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> columns;
    std::string column;
    while (fields >> column) columns.push_back(std::move(column));
    if (columns.empty()) {
      flush_sequence();
      continue;
    }
    if (columns.front() == options.doc_separator) {
      flush_sequence();
      if (saw_separator || !corpus.sequences.empty()) ++doc_counter;
      saw_separator = true;
      continue;
    }
    if (columns.size() < 2) {
      throw FormatError("line " + std::to_string(line_number) +
                        ": expected token and label columns, got 1 column");
    }
    std::string token = std::move(columns.front());
    if (options.digit_normalize) token = normalize_digits(token);
    current.tokens.push_back(std::move(token));
    current.labels.push_back(std::move(columns.back()));
  }
  flush_sequence();

  if (!saw_separator) {
    // One sequence = one document when no separators are present.
    for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
      corpus.sequences[i].doc_id = i;
    }
  }
  return corpus;
}

void write_conll(const Corpus& corpus, std::ostream& out) {
  for (const auto& sequence : corpus.sequences) {
    for (std::size_t t = 0; t < sequence.tokens.size(); ++t) {
      out << sequence.tokens[t] << ' ' << sequence.labels[t] << '\n';
    }
    out << '\n';
  }
}

namespace {

struct SplitTag {
  char prefix = 'O';       // 'O', 'B', 'I', 'E', 'S'
  std::string type;
};

SplitTag split_tag(const std::string& label) {
  SplitTag tag;
  if (label == "O" || label.empty()) return tag;
  if (label.size() >= 2 && label[1] == '-' &&
      (label[0] == 'B' || label[0] == 'I' || label[0] == 'E' ||
       label[0] == 'S')) {
    tag.prefix = label[0];
    tag.type = label.substr(2);
    return tag;
  }
  // Unprefixed tags are scored as single-token inside chunks of that type.
  tag.prefix = 'I';
  tag.type = label;
  return tag;
}

}  // namespace

std::vector<Chunk> extract_chunks(std::span<const std::string> labels,
                                  TagScheme scheme) {
  std::vector<Chunk> chunks;
  bool open = false;
  Chunk chunk;
  auto close = [&](std::size_t end) {
    if (open) {
      chunk.end = end;
      chunks.push_back(chunk);
      open = false;
    }
  };
  for (std::size_t t = 0; t < labels.size(); ++t) {
    SplitTag tag = split_tag(labels[t]);
    if (tag.prefix == 'O') {
      close(t);
      continue;
    }
    bool continues = open && chunk.type == tag.type &&
                     (tag.prefix == 'I' || tag.prefix == 'E');
    if (!continues) {
      close(t);
      chunk = Chunk{t, t, tag.type};
      open = true;
    }
    bool closes_here = scheme == TagScheme::kIobes &&
                       (tag.prefix == 'E' || tag.prefix == 'S');
    if (closes_here) close(t + 1);
  }
  close(labels.size());
  return chunks;
}

double EntityScore::precision() const {
  return predicted == 0 ? 0.0
                        : 100.0 * static_cast<double>(correct) /
                              static_cast<double>(predicted);
}

double EntityScore::recall() const {
  return gold == 0 ? 0.0
                   : 100.0 * static_cast<double>(correct) /
                         static_cast<double>(gold);
}

double EntityScore::f1() const {
  double p = precision();
  double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double ChunkF1Report::precision() const {
  return predicted == 0 ? 0.0
                        : 100.0 * static_cast<double>(correct) /
                              static_cast<double>(predicted);
}

double ChunkF1Report::recall() const {
  return gold == 0 ? 0.0
                   : 100.0 * static_cast<double>(correct) /
                         static_cast<double>(gold);
}

double ChunkF1Report::f1() const {
  double p = precision();
  double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

ChunkF1Report chunk_f1(std::span<const std::vector<std::string>> gold,
                       std::span<const std::vector<std::string>> pred,
                       TagScheme scheme) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("chunk_f1: sequence count mismatch");
  }
  ChunkF1Report report;
  std::map<std::string, EntityScore> per_entity;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw std::invalid_argument("chunk_f1: length mismatch in sequence " +
                                  std::to_string(s));
    }
    std::vector<Chunk> gold_chunks = extract_chunks(gold[s], scheme);
    std::vector<Chunk> pred_chunks = extract_chunks(pred[s], scheme);
    for (const Chunk& chunk : gold_chunks) {
      auto& entry = per_entity[chunk.type];
      entry.type = chunk.type;
      ++entry.gold;
      ++report.gold;
    }
    for (const Chunk& chunk : pred_chunks) {
      auto& entry = per_entity[chunk.type];
      entry.type = chunk.type;
      ++entry.predicted;
      ++report.predicted;
      if (std::find(gold_chunks.begin(), gold_chunks.end(), chunk) !=
          gold_chunks.end()) {
        ++entry.correct;
        ++report.correct;
      }
    }
  }
  report.per_entity.reserve(per_entity.size());
  for (auto& [type, score] : per_entity) {
    report.per_entity.push_back(std::move(score));
  }
  return report;
}

void print_report(const ChunkF1Report& report, std::ostream& out) {
  std::size_t width = 8;
  for (const auto& entity : report.per_entity) {
    width = std::max(width, entity.type.size() + 2);
  }
  out << std::fixed << std::setprecision(2);
  out << "chunks: gold " << report.gold << ", predicted " << report.predicted
      << ", correct " << report.correct << "\n";
  out << "overall: precision " << report.precision() << "  recall "
      << report.recall() << "  f1 " << report.f1() << "\n";
  out << std::left << std::setw(static_cast<int>(width)) << "entity"
      << std::right << std::setw(10) << "precision" << std::setw(10)
      << "recall" << std::setw(10) << "f1" << std::setw(10) << "support"
      << "\n";
  for (const auto& entity : report.per_entity) {
    out << std::left << std::setw(static_cast<int>(width)) << entity.type
        << std::right << std::setw(10) << entity.precision() << std::setw(10)
        << entity.recall() << std::setw(10) << entity.f1() << std::setw(10)
        << entity.gold << "\n";
  }
}

void print_report_kv(const ChunkF1Report& report, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "overall.precision = " << report.precision() << "\n";
  out << "overall.recall = " << report.recall() << "\n";
  out << "overall.f1 = " << report.f1() << "\n";
  out << "overall.gold = " << report.gold << "\n";
  out << "overall.predicted = " << report.predicted << "\n";
  out << "overall.correct = " << report.correct << "\n";
  for (const auto& entity : report.per_entity) {
    out << entity.type << ".precision = " << entity.precision() << "\n";
    out << entity.type << ".recall = " << entity.recall() << "\n";
    out << entity.type << ".f1 = " << entity.f1() << "\n";
    out << entity.type << ".support = " << entity.gold << "\n";
  }
}

const char* constraint_kind_name(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kAtMostOnce: return "at-most-once";
    case ConstraintKind::kExactlyOnce: return "exactly-once";
    case ConstraintKind::kCoOccurrence: return "co-occurrence";
    case ConstraintKind::kFirstOccurrenceOnly: return "first-occurrence-only";
  }
  return "unknown";
}

ConstraintKind constraint_kind_from_name(const std::string& name) {
  if (name == "at-most-once") return ConstraintKind::kAtMostOnce;
  if (name == "exactly-once") return ConstraintKind::kExactlyOnce;
  if (name == "co-occurrence") return ConstraintKind::kCoOccurrence;
  if (name == "first-occurrence-only") {
    return ConstraintKind::kFirstOccurrenceOnly;
  }
  throw ConfigError("unknown constraint kind '" + name + "'");
}

ConstraintSpec ConstraintSpec::defaults(ConstraintKind kind) {
  ConstraintSpec spec;
  spec.kind = kind;
  spec.trigger_tokens = {"aleph", "bet", "gimel", "dalet", "he", "vav"};
  spec.filler_tokens = {
      "ka", "ko", "ku", "ma", "mo", "mu", "na", "no", "nu", "ra",
      "ro", "ru", "sa", "so", "su", "ta", "to", "tu", "wa", "wo",
      "ya", "yo", "yu", "za", "zo", "zu", "pa", "po", "pu", "qa"};
  spec.anchor_tokens = {"alpha", "beta", "gamma", "delta"};
  spec.min_length = 12;
  spec.max_length = 16;
  spec.trigger_chunk_len = 2;
  spec.min_trigger_gap = 3;
  spec.edge_margin = 2;
  switch (kind) {
    case ConstraintKind::kAtMostOnce:
      spec.trigger_count_weights = {0.2, 0.4, 0.4};
      break;
    case ConstraintKind::kExactlyOnce:
      spec.trigger_count_weights = {0.0, 0.5, 0.5};
      break;
    case ConstraintKind::kFirstOccurrenceOnly:
      spec.trigger_count_weights = {0.0, 0.3, 0.4, 0.3};
      spec.min_length = 18;
      spec.max_length = 24;
      break;
    case ConstraintKind::kCoOccurrence:
      spec.trigger_count_weights = {0.0, 1.0};
      spec.constrained_type = "dose";
      spec.anchor_type = "med";
      break;
  }
  return spec;
}

namespace {

std::size_t sample_weighted(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double draw = rng.uniform() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cumulative += weights[i];
    if (draw < cumulative) return i;
  }
  return weights.size() - 1;
}

/// Picks n chunk-start positions within [margin, length - margin) so chunks
/// of slot_len tokens stay inside the margin with at least min_gap fillers
/// between chunks; a positive gap_cap bounds both the first chunk's offset
/// from the margin and the extra fillers between chunks. Returns empty when
/// the sequence cannot fit them.
std::vector<std::size_t> place_slots(std::size_t length, std::size_t n,
                                     std::size_t slot_len, std::size_t margin,
                                     std::size_t min_gap, std::size_t gap_cap,
                                     Rng& rng) {
  std::vector<std::size_t> positions;
  if (n == 0) return positions;
  if (length < 2 * margin) return positions;
  std::size_t usable = length - 2 * margin;
  std::size_t needed = n * slot_len + (n - 1) * min_gap;
  if (usable < needed) return positions;
  std::size_t slack = usable - needed;
  std::size_t cursor = margin;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t limit = gap_cap == 0 ? slack : std::min(slack, gap_cap);
    std::size_t pad = limit == 0 ? 0 : rng.below(limit + 1);
    slack -= pad;
    cursor += pad;
    positions.push_back(cursor);
    cursor += slot_len + min_gap;
  }
  return positions;
}

}  // namespace

Corpus generate_constraint_corpus(const ConstraintSpec& spec,
                                  std::size_t n_sequences,
                                  std::uint64_t seed) {
  if (spec.trigger_tokens.empty() || spec.filler_tokens.empty()) {
    throw ConfigError("constraint spec requires trigger and filler pools");
  }
  if (spec.trigger_count_weights.empty()) {
    throw ConfigError("constraint spec requires trigger-count weights");
  }
  double positive_weight = 0.0;
  for (std::size_t i = 1; i < spec.trigger_count_weights.size(); ++i) {
    positive_weight += spec.trigger_count_weights[i];
  }
  if ((spec.kind == ConstraintKind::kExactlyOnce ||
       spec.kind == ConstraintKind::kCoOccurrence) &&
      positive_weight <= 0.0) {
    throw ConfigError("unsatisfiable spec: " +
                      std::string(constraint_kind_name(spec.kind)) +
                      " needs at least one trigger slot per sequence");
  }
  if (spec.kind == ConstraintKind::kCoOccurrence && spec.anchor_tokens.empty()) {
    throw ConfigError("co-occurrence spec requires anchor tokens");
  }
  if (spec.max_length < spec.min_length) {
    throw ConfigError("constraint spec: max_length < min_length");
  }
  if (spec.trigger_chunk_len == 0) {
    throw ConfigError("constraint spec: trigger chunks need >= 1 token");
  }

  Corpus corpus;
  corpus.provenance = std::string("synth:") + constraint_kind_name(spec.kind);
  Rng rng(mix_seed(seed, 0x73796E7468ULL));

  // Trigger chunks are trigger_chunk_len tokens, every token drawn from the
  // shared ambiguous pool, labeled B-type I-type ... of the given type.
  auto paint_chunk = [&](Sequence& sequence, std::size_t pos,
                         const std::string& type) {
    for (std::size_t o = 0; o < spec.trigger_chunk_len; ++o) {
      sequence.tokens[pos + o] =
          spec.trigger_tokens[rng.below(spec.trigger_tokens.size())];
      sequence.labels[pos + o] = (o == 0 ? "B-" : "I-") + type;
    }
  };

  for (std::size_t s = 0; s < n_sequences; ++s) {
    std::size_t length =
        spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
    std::size_t want_triggers =
        sample_weighted(spec.trigger_count_weights, rng);
    bool with_anchor = false;
    std::size_t slot_count = want_triggers;
    if (spec.kind == ConstraintKind::kCoOccurrence) {
      // Half the sequences carry the anchor; the trigger is labeled with the
      // constrained type exactly when the anchor is present.
      with_anchor = rng.uniform() < 0.5;
      slot_count = want_triggers + 1;  // the extra slot holds the anchor
    }
    std::size_t gap_cap =
        spec.max_trigger_gap == 0 ? 0
                                  : spec.max_trigger_gap - spec.min_trigger_gap;
    if (spec.max_trigger_gap != 0 &&
        spec.max_trigger_gap < spec.min_trigger_gap) {
      throw ConfigError("constraint spec: max_trigger_gap < min_trigger_gap");
    }
    std::vector<std::size_t> slots =
        place_slots(length, slot_count, spec.trigger_chunk_len,
                    spec.edge_margin, spec.min_trigger_gap, gap_cap, rng);
    if (slot_count > 0 && slots.empty()) {
      throw ConfigError(
          "unsatisfiable spec: sequence length cannot fit the trigger slots");
    }

    Sequence sequence;
    sequence.doc_id = s;
    sequence.meta = constraint_kind_name(spec.kind);
    sequence.tokens.resize(length);
    sequence.labels.assign(length, "O");
    for (std::size_t t = 0; t < length; ++t) {
      sequence.tokens[t] =
          spec.filler_tokens[rng.below(spec.filler_tokens.size())];
    }

    if (spec.kind == ConstraintKind::kCoOccurrence) {
      // The anchor slot is chosen uniformly so it may precede or follow the
      // trigger; the constraint is order-free.
      std::size_t anchor_slot = rng.below(slots.size());
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (i == anchor_slot) {
          if (with_anchor) {
            sequence.tokens[slots[i]] =
                spec.anchor_tokens[rng.below(spec.anchor_tokens.size())];
            sequence.labels[slots[i]] = "B-" + spec.anchor_type;
          }
          // Without the anchor the slot stays a filler token.
        } else {
          paint_chunk(sequence, slots[i],
                      with_anchor ? spec.constrained_type
                                  : spec.distractor_type);
        }
      }
    } else {
      // The first trigger carries the constrained label, the rest the
      // distractor; sequences with no trigger carry neither.
      for (std::size_t i = 0; i < slots.size(); ++i) {
        paint_chunk(sequence, slots[i],
                    i == 0 ? spec.constrained_type : spec.distractor_type);
      }
    }
    corpus.sequences.push_back(std::move(sequence));
  }
  return corpus;
}

std::size_t count_constraint_violations(
    const ConstraintSpec& spec,
    std::span<const std::vector<std::string>> label_sequences) {
  std::size_t violations = 0;
  for (const auto& labels : label_sequences) {
    std::size_t constrained_count = 0;
    std::size_t anchor_count = 0;
    std::size_t first_constrained = labels.size();
    std::size_t first_distractor = labels.size();
    for (const Chunk& chunk : extract_chunks(labels, TagScheme::kIob)) {
      if (chunk.type == spec.constrained_type) {
        ++constrained_count;
        first_constrained = std::min(first_constrained, chunk.begin);
      } else if (chunk.type == spec.distractor_type) {
        first_distractor = std::min(first_distractor, chunk.begin);
      } else if (chunk.type == spec.anchor_type) {
        ++anchor_count;
      }
    }
    bool violated = false;
    switch (spec.kind) {
      case ConstraintKind::kAtMostOnce:
        violated = constrained_count > 1;
        break;
      case ConstraintKind::kExactlyOnce:
        violated = constrained_count != 1;
        break;
      case ConstraintKind::kCoOccurrence:
        violated = (constrained_count > 0) != (anchor_count > 0);
        break;
      case ConstraintKind::kFirstOccurrenceOnly:
        violated = constrained_count != 1 ||
                   (first_distractor < first_constrained);
        break;
    }
    if (violated) ++violations;
  }
  return violations;
}

std::size_t count_constraint_violations(const ConstraintSpec& spec,
                                        const Corpus& corpus) {
  std::vector<std::vector<std::string>> labels;
  labels.reserve(corpus.size());
  for (const auto& sequence : corpus.sequences) {
    labels.push_back(sequence.labels);
  }
  return count_constraint_violations(spec, labels);
}

}  // namespace elcrf
