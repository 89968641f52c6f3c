// Command-line front end: train / tag / eval / synth / inspect.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "elcrf/data_eval.hpp"
#include "elcrf/model.hpp"
#include "elcrf/training.hpp"

namespace {

using namespace elcrf;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

/// "key = value" config files: command-line flags win, unknown keys are an
/// error. CLI11's own subcommand config handling does not fire when the
/// parent app drives the parse, so the merge is done here.
class ConfigBinder {
 public:
  template <typename T>
  void bind(CLI::Option* option, const std::string& key, T& target) {
    entries_[key] = Entry{option, [&target, key](const std::string& raw) {
                            parse_into(raw, target, key);
                          }};
  }

  void apply_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      std::size_t equals = trimmed.find('=');
      if (equals == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_number) +
                          ": expected key = value");
      }
      std::string key = trim(trimmed.substr(0, equals));
      std::string value = trim(trimmed.substr(equals + 1));
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      if (it->second.option != nullptr && it->second.option->count() > 0) {
        continue;  // the flag wins
      }
      it->second.apply(value);
    }
  }

 private:
  struct Entry {
    CLI::Option* option = nullptr;
    std::function<void(const std::string&)> apply;
  };

  static std::string trim(const std::string& text) {
    std::size_t begin = text.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = text.find_last_not_of(" \t\r");
    return text.substr(begin, end - begin + 1);
  }

  template <typename T>
  static void parse_into(const std::string& raw, T& target,
                         const std::string& key) {
    std::istringstream stream(raw);
    T value{};
    if constexpr (std::is_same_v<T, bool>) {
      std::string word;
      stream >> word;
      if (word == "true" || word == "1" || word == "yes") {
        value = true;
      } else if (word == "false" || word == "0" || word == "no") {
        value = false;
      } else {
        throw ConfigError("config key '" + key + "': expected a boolean");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      value = raw;
    } else {
      if (!(stream >> value)) {
        throw ConfigError("config key '" + key + "': cannot parse '" + raw +
                          "'");
      }
    }
    target = value;
  }

  std::map<std::string, Entry> entries_;
};

struct Options {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string model_path;
  std::string embeddings_path;
  std::string out_path;
  std::string labels_path;
  std::string scheme = "iob";
  std::size_t hidden_states = 0;
  std::size_t factor_size = 20;
  bool full_rank = false;
  double learning_rate = 0.01;
  double lr_decay = 0.05;
  double clip_norm = 5.0;
  double dropout = 0.5;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  bool raw_digits = false;
  std::size_t emb_dim = 100;
  std::size_t window = 2;

  // eval
  std::vector<std::string> eval_files;
  bool loo = false;
  bool kv = false;

  // synth
  std::string constraint = "at-most-once";
  std::size_t n_sequences = 100;
  bool audit = false;
};

TrainConfig to_train_config(const Options& options) {
  TrainConfig config;
  config.learning_rate = options.learning_rate;
  config.lr_decay = options.lr_decay;
  config.clip_norm = options.clip_norm;
  config.dropout_p = options.dropout;
  config.max_epochs = options.epochs;
  config.patience = options.patience;
  config.factor_size = options.factor_size;
  config.full_rank = options.full_rank;
  config.num_states = options.hidden_states;
  config.seed = options.seed;
  config.scheme = tag_scheme_from_name(options.scheme);
  config.digit_normalize = !options.raw_digits;
  config.emb_dim = options.emb_dim;
  config.window = options.window;
  return config;
}

std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError(std::string("cannot open ") + what + ": " + path);
  }
  return in;
}

std::ofstream open_output(const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out) {
    throw FormatError(std::string("cannot create ") + what + ": " + path);
  }
  return out;
}

Corpus read_corpus_file(const std::string& path, bool digit_normalize,
                        const char* what) {
  std::ifstream in = open_input(path, what);
  ConllReadOptions read_options;
  read_options.digit_normalize = digit_normalize;
  Corpus corpus = read_conll(in, read_options);
  corpus.provenance = path;
  return corpus;
}

std::string format_double(double value, int precision) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", precision, value);
  return buffer;
}

void write_training_log(const TrainResult& result, std::ostream& out) {
  out << "epoch\tmean_nll\tdev_f1\tlr\tskipped\n";
  for (const EpochStats& stats : result.log) {
    out << stats.epoch << '\t' << format_double(stats.mean_nll, 6) << '\t'
        << (std::isnan(stats.dev_f1) ? std::string("-")
                                     : format_double(stats.dev_f1, 2))
        << '\t' << format_double(stats.learning_rate, 6) << '\t'
        << stats.skipped << '\n';
  }
}

int cmd_train(const Options& options) {
  TrainConfig config = to_train_config(options);
  Corpus train_corpus = read_corpus_file(options.train_path,
                                         config.digit_normalize, "train file");
  std::optional<Corpus> dev_corpus;
  if (!options.dev_path.empty()) {
    dev_corpus =
        read_corpus_file(options.dev_path, config.digit_normalize, "dev file");
  }
  if (!options.labels_path.empty()) {
    std::ifstream labels_in = open_input(options.labels_path, "label file");
    std::string line;
    while (std::getline(labels_in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) config.fixed_labels.push_back(line);
    }
  }

  TrainResult result = [&] {
    if (options.embeddings_path.empty()) {
      return train(config, train_corpus, dev_corpus ? &*dev_corpus : nullptr,
                   nullptr, &std::cerr);
    }
    std::ifstream embeddings =
        open_input(options.embeddings_path, "embeddings file");
    return train(config, train_corpus, dev_corpus ? &*dev_corpus : nullptr,
                 &embeddings, &std::cerr);
  }();

  save_model(result.params, options.model_path);
  write_training_log(result, std::cout);
  if (!options.out_path.empty()) {
    std::ofstream log_out = open_output(options.out_path, "log file");
    write_training_log(result, log_out);
  }
  return kExitOk;
}

/// A raw CoNLL view for tagging: original lines are preserved so the output
/// mirrors the input with the prediction appended. Token-only lines are fine.
struct RawSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> lines;
};

std::vector<RawSequence> read_raw_sequences(std::istream& in,
                                            bool digit_normalize) {
  std::vector<RawSequence> sequences;
  RawSequence current;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) {
      if (!current.tokens.empty()) {
        sequences.push_back(std::move(current));
        current = RawSequence{};
      }
      continue;
    }
    if (digit_normalize) token = normalize_digits(token);
    current.tokens.push_back(std::move(token));
    current.lines.push_back(line);
  }
  if (!current.tokens.empty()) sequences.push_back(std::move(current));
  return sequences;
}

int cmd_tag(const Options& options) {
  ModelParams params = load_model(options.model_path);
  std::ifstream in = open_input(options.test_path, "input file");
  std::vector<RawSequence> sequences =
      read_raw_sequences(in, params.config.digit_normalize);

  std::vector<std::vector<std::string>> predictions(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    predictions[i] = tag_sequence(params, sequences[i].tokens);
  }

  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!options.out_path.empty()) {
    file_out = open_output(options.out_path, "output file");
    out = &file_out;
  }
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    for (std::size_t t = 0; t < sequences[i].lines.size(); ++t) {
      *out << sequences[i].lines[t] << ' ' << predictions[i][t] << '\n';
    }
    *out << '\n';
  }
  return kExitOk;
}

std::vector<std::vector<std::string>> labels_of(const Corpus& corpus) {
  std::vector<std::vector<std::string>> labels;
  labels.reserve(corpus.size());
  for (const auto& sequence : corpus.sequences) {
    labels.push_back(sequence.labels);
  }
  return labels;
}

void check_alignment(const Corpus& gold, const Corpus& pred,
                     const std::string& pred_name) {
  if (gold.size() != pred.size()) {
    throw FormatError("gold and " + pred_name +
                      " disagree on sequence count (" +
                      std::to_string(gold.size()) + " vs " +
                      std::to_string(pred.size()) + ")");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold.sequences[i].labels.size() != pred.sequences[i].labels.size()) {
      throw FormatError("sequence " + std::to_string(i) +
                        " is misaligned in " + pred_name);
    }
  }
}

void print_comparison(const ChunkF1Report& base, const ChunkF1Report& other,
                      std::ostream& out) {
  struct Row {
    std::string type;
    double f1_base = 0.0;
    double f1_other = 0.0;
    std::size_t support = 0;
  };
  std::map<std::string, Row> rows;
  for (const auto& entity : base.per_entity) {
    rows[entity.type].type = entity.type;
    rows[entity.type].f1_base = entity.f1();
    rows[entity.type].support = entity.gold;
  }
  for (const auto& entity : other.per_entity) {
    rows[entity.type].type = entity.type;
    rows[entity.type].f1_other = entity.f1();
    rows[entity.type].support = entity.gold;
  }
  std::vector<Row> sorted;
  sorted.reserve(rows.size());
  for (auto& [type, row] : rows) sorted.push_back(row);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Row& a, const Row& b) {
                     return (a.f1_other - a.f1_base) > (b.f1_other - b.f1_base);
                   });

  std::size_t width = 8;
  for (const auto& row : sorted) width = std::max(width, row.type.size() + 2);
  out << "overall: first " << format_double(base.f1(), 2) << "  second "
      << format_double(other.f1(), 2) << "  improvement "
      << format_double(other.f1() - base.f1(), 2) << "\n";
  out << std::left << std::setw(static_cast<int>(width)) << "entity"
      << std::right << std::setw(10) << "first" << std::setw(10) << "second"
      << std::setw(13) << "improvement" << std::setw(10) << "support"
      << "\n";
  for (const auto& row : sorted) {
    out << std::left << std::setw(static_cast<int>(width)) << row.type
        << std::right << std::setw(10) << format_double(row.f1_base, 2)
        << std::setw(10) << format_double(row.f1_other, 2) << std::setw(13)
        << format_double(row.f1_other - row.f1_base, 2) << std::setw(10)
        << row.support << "\n";
  }
}

int cmd_eval(const Options& options) {
  TagScheme scheme = tag_scheme_from_name(options.scheme);

  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!options.out_path.empty()) {
    file_out = open_output(options.out_path, "output file");
    out = &file_out;
  }

  if (options.loo) {
    if (options.eval_files.size() != 1) {
      throw ConfigError("--loo expects exactly one corpus file");
    }
    TrainConfig config = to_train_config(options);
    Corpus corpus = read_corpus_file(options.eval_files[0],
                                     config.digit_normalize, "corpus file");
    ChunkF1Report report =
        loo_cross_validate(config, corpus, options.jobs, &std::cerr);
    if (options.kv) {
      print_report_kv(report, *out);
    } else {
      print_report(report, *out);
    }
    return kExitOk;
  }

  if (options.eval_files.size() < 2 || options.eval_files.size() > 3) {
    throw ConfigError("eval expects GOLD PRED [PRED2] (or --loo CORPUS)");
  }
  Corpus gold = read_corpus_file(options.eval_files[0], false, "gold file");
  Corpus pred =
      read_corpus_file(options.eval_files[1], false, "prediction file");
  check_alignment(gold, pred, "prediction file");
  ChunkF1Report report = chunk_f1(labels_of(gold), labels_of(pred), scheme);

  if (options.eval_files.size() == 3) {
    Corpus second =
        read_corpus_file(options.eval_files[2], false, "second prediction file");
    check_alignment(gold, second, "second prediction file");
    ChunkF1Report other = chunk_f1(labels_of(gold), labels_of(second), scheme);
    print_comparison(report, other, *out);
    return kExitOk;
  }

  if (options.kv) {
    print_report_kv(report, *out);
  } else {
    print_report(report, *out);
  }
  return kExitOk;
}

int cmd_synth(const Options& options) {
  ConstraintSpec spec =
      ConstraintSpec::defaults(constraint_kind_from_name(options.constraint));
  Corpus corpus =
      generate_constraint_corpus(spec, options.n_sequences, options.seed);
  std::size_t violations = count_constraint_violations(spec, corpus);
  if (options.audit) {
    std::cerr << "audit: " << violations << " constraint violations in "
              << corpus.size() << " sequences\n";
  }
  if (violations != 0) {
    std::cerr << "generator produced a corpus violating its own constraint\n";
    return kExitInternal;
  }
  std::ofstream out = open_output(options.out_path, "output file");
  write_conll(corpus, out);
  return kExitOk;
}

int cmd_inspect(const Options& options) {
  ModelParams params = load_model(options.model_path);
  if (params.transitions.mode != TransitionFactors::Mode::kFactorized) {
    std::cerr << "inspect: the model is full-rank; there are no state "
                 "embeddings to dump (train with --factor-size)\n";
    return kExitUsage;
  }
  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!options.out_path.empty()) {
    file_out = open_output(options.out_path, "output file");
    out = &file_out;
  }
  const TransitionFactors& factors = params.transitions;
  *out << "# state label";
  for (std::size_t r = 0; r < factors.rank; ++r) *out << " u" << r;
  for (std::size_t r = 0; r < factors.rank; ++r) *out << " v" << r;
  *out << "\n";
  char buffer[64];
  for (std::size_t state = 0; state < params.num_states(); ++state) {
    *out << state << ' ' << params.schema.label(params.states.label_of(state));
    for (std::size_t r = 0; r < factors.rank; ++r) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", factors.u(r, state));
      *out << ' ' << buffer;
    }
    for (std::size_t r = 0; r < factors.rank; ++r) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", factors.v(r, state));
      *out << ' ' << buffer;
    }
    *out << "\n";
  }
  return kExitOk;
}

void add_common_train_flags(CLI::App* cmd, Options& options,
                            ConfigBinder& binder) {
  binder.bind(cmd->add_option("--hidden-states", options.hidden_states,
                              "Latent state count M (0 = 3N)"),
              "hidden-states", options.hidden_states);
  binder.bind(cmd->add_option("--factor-size", options.factor_size,
                              "Transition embedding rank k"),
              "factor-size", options.factor_size);
  binder.bind(cmd->add_flag("--full-rank", options.full_rank,
                            "Use a full M x M transition matrix"),
              "full-rank", options.full_rank);
  binder.bind(cmd->add_option("--scheme", options.scheme,
                              "Tagging scheme: iob or iobes")
                  ->check(CLI::IsMember({"iob", "iobes"})),
              "scheme", options.scheme);
  binder.bind(cmd->add_option("--lr", options.learning_rate, "Learning rate"),
              "lr", options.learning_rate);
  binder.bind(
      cmd->add_option("--lr-decay", options.lr_decay, "Learning-rate decay"),
      "lr-decay", options.lr_decay);
  binder.bind(
      cmd->add_option("--clip", options.clip_norm, "Gradient clipping norm"),
      "clip", options.clip_norm);
  binder.bind(
      cmd->add_option("--dropout", options.dropout, "Dropout probability"),
      "dropout", options.dropout);
  binder.bind(
      cmd->add_option("--epochs", options.epochs, "Maximum training epochs"),
      "epochs", options.epochs);
  binder.bind(cmd->add_option("--patience", options.patience,
                              "Early-stopping patience"),
              "patience", options.patience);
  binder.bind(cmd->add_option("--seed", options.seed, "Random seed"), "seed",
              options.seed);
  binder.bind(cmd->add_flag("--raw-digits", options.raw_digits,
                            "Disable digit zero-replacement"),
              "raw-digits", options.raw_digits);
  binder.bind(cmd->add_option("--embeddings", options.embeddings_path,
                              "Pretrained embedding file"),
              "embeddings", options.embeddings_path);
  binder.bind(cmd->add_option("--emb-dim", options.emb_dim,
                              "Word embedding dimension"),
              "emb-dim", options.emb_dim);
  binder.bind(
      cmd->add_option("--window", options.window, "Featurizer half-width"),
      "window", options.window);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedded-state latent CRF sequence labeler"};
  app.require_subcommand(1);
  Options options;
  std::string config_path;
  std::map<CLI::App*, ConfigBinder> binders;

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model on a CoNLL corpus");
  {
    ConfigBinder& binder = binders[train_cmd];
    binder.bind(
        train_cmd->add_option("--train", options.train_path, "Training corpus")
            ->required(),
        "train", options.train_path);
    binder.bind(train_cmd->add_option("--dev", options.dev_path,
                                      "Development corpus for early stopping"),
                "dev", options.dev_path);
    train_cmd->add_option("--model", options.model_path, "Output model path")
        ->required();
    binder.bind(train_cmd->add_option("--labels", options.labels_path,
                                      "Label list file (one label per line)"),
                "labels", options.labels_path);
    binder.bind(
        train_cmd->add_option("--out", options.out_path, "Training log path"),
        "out", options.out_path);
    binder.bind(
        train_cmd->add_option("--jobs", options.jobs, "Worker threads"),
        "jobs", options.jobs);
    add_common_train_flags(train_cmd, options, binder);
    train_cmd->add_option("--config", config_path,
                          "Config file (key = value lines)");
  }

  CLI::App* tag_cmd = app.add_subcommand("tag", "Tag a corpus with a model");
  {
    ConfigBinder& binder = binders[tag_cmd];
    tag_cmd->add_option("--model", options.model_path, "Model path")
        ->required();
    tag_cmd->add_option("--test", options.test_path, "Input corpus")
        ->required();
    binder.bind(tag_cmd->add_option("--out", options.out_path,
                                    "Tagged output path (default stdout)"),
                "out", options.out_path);
    binder.bind(tag_cmd->add_option("--jobs", options.jobs, "Worker threads"),
                "jobs", options.jobs);
    tag_cmd->add_option("--config", config_path,
                        "Config file (key = value lines)");
  }

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Score predictions (GOLD PRED [PRED2]) or run --loo CORPUS");
  {
    ConfigBinder& binder = binders[eval_cmd];
    eval_cmd->add_option("files", options.eval_files,
                         "GOLD PRED [PRED2], or CORPUS with --loo");
    binder.bind(eval_cmd->add_flag("--loo", options.loo,
                                   "Leave-one-out cross-validation over "
                                   "documents"),
                "loo", options.loo);
    binder.bind(eval_cmd->add_flag("--kv", options.kv,
                                   "Key-value report format"),
                "kv", options.kv);
    binder.bind(
        eval_cmd->add_option("--out", options.out_path, "Report output path"),
        "out", options.out_path);
    binder.bind(eval_cmd->add_option("--jobs", options.jobs, "Worker threads"),
                "jobs", options.jobs);
    add_common_train_flags(eval_cmd, options, binder);
    eval_cmd->add_option("--config", config_path,
                         "Config file (key = value lines)");
  }

  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "Generate a corpus with a planted global constraint");
  {
    ConfigBinder& binder = binders[synth_cmd];
    binder.bind(
        synth_cmd
            ->add_option("--constraint", options.constraint,
                         "at-most-once | exactly-once | co-occurrence | "
                         "first-occurrence-only")
            ->check(CLI::IsMember({"at-most-once", "exactly-once",
                                   "co-occurrence", "first-occurrence-only"})),
        "constraint", options.constraint);
    binder.bind(synth_cmd->add_option("--n", options.n_sequences,
                                      "Sequence count"),
                "n", options.n_sequences);
    binder.bind(synth_cmd->add_option("--seed", options.seed, "Random seed"),
                "seed", options.seed);
    synth_cmd->add_option("--out", options.out_path, "Output path")
        ->required();
    binder.bind(synth_cmd->add_flag("--audit", options.audit,
                                    "Re-scan the emitted corpus for "
                                    "violations"),
                "audit", options.audit);
    synth_cmd->add_option("--config", config_path,
                          "Config file (key = value lines)");
  }

  CLI::App* inspect_cmd = app.add_subcommand(
      "inspect", "Dump per-state transition embeddings from a model");
  {
    inspect_cmd->add_option("--model", options.model_path, "Model path")
        ->required();
    ConfigBinder& binder = binders[inspect_cmd];
    binder.bind(inspect_cmd->add_option("--out", options.out_path,
                                        "Dump path (default stdout)"),
                "out", options.out_path);
    inspect_cmd->add_option("--config", config_path,
                            "Config file (key = value lines)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    int code = app.exit(error);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* parsed = nullptr;
    for (CLI::App* cmd : {train_cmd, tag_cmd, eval_cmd, synth_cmd,
                          inspect_cmd}) {
      if (cmd->parsed()) parsed = cmd;
    }
    if (parsed == nullptr) return kExitUsage;
    if (!config_path.empty()) binders[parsed].apply_file(config_path);

    if (parsed == train_cmd) return cmd_train(options);
    if (parsed == tag_cmd) return cmd_tag(options);
    if (parsed == eval_cmd) return cmd_eval(options);
    if (parsed == synth_cmd) return cmd_synth(options);
    return cmd_inspect(options);
  } catch (const FormatError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& error) {
    std::cerr << "error: " << error.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& error) {
    std::cerr << "internal error: " << error.what() << "\n";
    return kExitInternal;
  }
}
