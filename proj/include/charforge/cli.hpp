#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "charforge/checkpoint.hpp"
#include "charforge/corpus.hpp"
#include "charforge/generation.hpp"
#include "charforge/report.hpp"
#include "charforge/training.hpp"

namespace charforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Every option of every subcommand, with defaults already applied.
struct RunConfig {
  std::string subcommand;

  // prepare
  std::string input;
  std::string output = "corpus.cfrg";
  std::string format = "auto";
  std::string column = "PlayerLine";
  std::optional<bool> lowercase;
  bool no_strip_citations = false;
  bool no_strip_numbering = false;
  bool no_collapse_whitespace = false;
  std::string vocab_scope = "all";
  std::size_t max_bytes = 0;
  double ratio = 0.7;

  // train / eval / generate
  std::string corpus;
  std::string checkpoint = "model.cfrg";
  std::string best_checkpoint;
  std::string metrics = "metrics.csv";
  std::string report = "train_report.json";
  std::size_t seq_len = 40;
  std::size_t stride = 3;
  std::size_t hidden = 128;
  std::size_t lstm_layers = 2;
  std::size_t batch = 128;
  std::size_t epochs = 100;
  double lr = 1e-2;
  double rho = 0.9;
  double eps = 1e-7;
  double clip_norm = 5.0;
  std::uint64_t seed = 42;
  bool no_timing = false;
  bool quiet = false;
  std::size_t sample_length = 400;
  double sample_temperature = 0.8;
  std::string split = "test";
  std::string json_out;
  std::optional<std::string> seed_text;
  std::size_t length = 400;
  double temperature = 0.5;

  // report
  std::vector<std::string> metrics_files;
  std::vector<std::string> labels;
  std::string literature;
  std::string table_format = "markdown";
  std::string table_output;
};

/// One-line `key=value` rendering of the options that apply to the subcommand.
inline std::string describe(const RunConfig& c) {
  std::ostringstream s;
  s << "subcommand=" << c.subcommand;
  auto kv = [&s](const char* k, const auto& v) { s << ' ' << k << '=' << v; };
  if (c.subcommand == "prepare") {
    kv("input", c.input);
    kv("output", c.output);
    kv("format", c.format);
    kv("column", c.column);
    kv("lowercase", c.lowercase ? (*c.lowercase ? "on" : "off") : "auto");
    kv("strip_citations", c.no_strip_citations ? "off" : "on");
    kv("strip_numbering", c.no_strip_numbering ? "off" : "on");
    kv("collapse_whitespace", c.no_collapse_whitespace ? "off" : "on");
    kv("ratio", c.ratio);
    kv("vocab_scope", c.vocab_scope);
    kv("max_bytes", c.max_bytes);
  } else if (c.subcommand == "train") {
    kv("corpus", c.corpus);
    kv("checkpoint", c.checkpoint);
    kv("best_checkpoint", c.best_checkpoint);
    kv("metrics", c.metrics);
    kv("report", c.report);
    kv("seq_len", c.seq_len);
    kv("stride", c.stride);
    kv("hidden", c.hidden);
    kv("lstm_layers", c.lstm_layers);
    kv("batch", c.batch);
    kv("epochs", c.epochs);
    kv("lr", c.lr);
    kv("rho", c.rho);
    kv("eps", c.eps);
    kv("clip_norm", c.clip_norm);
    kv("seed", c.seed);
    kv("timing", c.no_timing ? "off" : "on");
    kv("sample_length", c.sample_length);
    kv("sample_temperature", c.sample_temperature);
  } else if (c.subcommand == "eval") {
    kv("checkpoint", c.checkpoint);
    kv("corpus", c.corpus);
    kv("split", c.split);
    kv("stride", c.stride);
    kv("batch", c.batch);
  } else if (c.subcommand == "generate") {
    kv("checkpoint", c.checkpoint);
    kv("seed_text", c.seed_text ? nlohmann::json(*c.seed_text).dump() : std::string("auto"));
    kv("length", c.length);
    kv("temperature", c.temperature);
    kv("seed", c.seed);
  } else if (c.subcommand == "report") {
    for (const auto& f : c.metrics_files) kv("metrics", f);
    for (const auto& l : c.labels) kv("label", l);
    kv("literature", c.literature);
    kv("format", c.table_format);
  }
  return s.str();
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  charforge::detail::write_file(path, text);
}

inline SequenceSet windows_for(const PreparedCorpus& pc, const std::string& part,
                               std::size_t seq_len, std::size_t stride) {
  const CorpusSplit parts = pc.split_text();
  return encode_windows(part == "train" ? parts.train_text : parts.test_text, pc.vocab, seq_len,
                        stride);
}

inline int run_prepare(const RunConfig& c, std::ostream& out) {
  Origin origin = Origin::plain_text;
  if (c.format == "csv" ||
      (c.format == "auto" && std::filesystem::path(c.input).extension() == ".csv")) {
    origin = Origin::play_csv;
  }
  const RawText raw =
      origin == Origin::play_csv ? load_play_csv(c.input, c.column) : load_plain_text(c.input);
  CleaningRules rules = CleaningRules::defaults_for(origin);
  if (c.lowercase) rules.lowercase = *c.lowercase;
  rules.strip_bracket_citations = !c.no_strip_citations;
  rules.strip_line_numbering = !c.no_strip_numbering;
  rules.collapse_whitespace = !c.no_collapse_whitespace;
  const std::size_t limit = c.max_bytes == 0 ? static_cast<std::size_t>(-1) : c.max_bytes;
  const PreparedCorpus pc = prepare_corpus(raw, rules, c.ratio, c.vocab_scope == "train", limit);
  save_corpus_cache(pc, c.output);
  const CorpusSplit parts = pc.split_text();
  out << "prepared " << c.output << ": " << utf8::length(pc.text) << " characters, train "
      << utf8::length(parts.train_text) << ", test " << utf8::length(parts.test_text)
      << ", vocabulary " << pc.vocab.size() << "\n";
  return kExitOk;
}

inline int run_train(const RunConfig& c, std::ostream& out) {
  const PreparedCorpus pc = load_corpus_cache(c.corpus);
  const SequenceSet train_set = windows_for(pc, "train", c.seq_len, c.stride);
  const SequenceSet val_set = windows_for(pc, "test", c.seq_len, c.stride);

  FitOptions opts;
  opts.model.hidden_size = c.hidden;
  opts.model.num_lstm_layers = c.lstm_layers;
  opts.optimizer = {c.lr, c.rho, c.eps, c.clip_norm};
  opts.epochs = c.epochs;
  opts.batch_size = c.batch;
  opts.seed = c.seed;
  opts.metrics_csv = c.metrics;
  opts.checkpoint = c.checkpoint;
  opts.best_checkpoint = c.best_checkpoint;
  opts.record_wall_time = !c.no_timing;
  opts.config_echo = describe(c);
  if (!c.quiet) {
    opts.on_epoch = [&out, total = c.epochs](const EpochMetrics& m) {
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "epoch %zu/%zu  train_loss %.4f  train_acc %.4f  val_loss %.4f  val_acc %.4f  "
                    "(%.1fs)\n",
                    m.epoch, total, m.train_loss, m.train_acc, m.val_loss, m.val_acc,
                    m.wall_seconds);
      out << buf << std::flush;
    };
  }
  out << "training on " << train_set.size() << " windows, validating on " << val_set.size()
      << ", vocabulary " << pc.vocab.size() << "\n";
  FitResult<float> result = fit<float>(opts, pc.vocab, train_set, val_set);
  TrainReport& report = result.report;

  if (c.sample_length > 0) {
    // Prime with the tail of the training text, which is always inside the vocabulary.
    const std::u32string train_text = utf8::decode(pc.split_text().train_text);
    const std::size_t prime = std::min(c.seq_len, train_text.size());
    GenerationRequest req;
    req.seed_text = utf8::encode(std::u32string_view(train_text).substr(train_text.size() - prime));
    req.length = c.sample_length;
    req.temperature = c.sample_temperature;
    req.rng_seed = mix_seed(c.seed, 0x5A3D1E);
    report.sample_text = generate(result.params, pc.vocab, req);
    report.sample_temperature = c.sample_temperature;
    report.sample_repetition_rate = repetition_rate(*report.sample_text, report.repetition_ngram);
    char buf[120];
    std::snprintf(buf, sizeof buf, "sample %zu-gram repetition rate at temperature %.2f: %.4f\n",
                  report.repetition_ngram, c.sample_temperature, *report.sample_repetition_rate);
    out << buf;
  }
  if (!c.report.empty()) write_train_report(report, c.report);
  out << "wrote " << c.checkpoint << ", " << c.metrics
      << (c.report.empty() ? "" : ", " + c.report) << "\n";
  return kExitOk;
}

inline int run_eval(const RunConfig& c, std::ostream& out) {
  const Checkpoint<float> ck = load_checkpoint<float>(c.checkpoint);
  const PreparedCorpus pc = load_corpus_cache(c.corpus);
  if (!(pc.vocab == ck.vocab)) {
    throw DataError("the corpus vocabulary differs from the checkpoint vocabulary");
  }
  const SequenceSet data = windows_for(pc, c.split, ck.params.config.seq_len, c.stride);
  const EvalResult r = evaluate(ck.params, data, c.batch);
  char buf[160];
  std::snprintf(buf, sizeof buf, "split=%s loss=%.6f accuracy=%.6f samples=%zu\n", c.split.c_str(),
                r.loss, r.accuracy, r.samples);
  out << buf;
  const nlohmann::json j = {
      {"split", c.split}, {"loss", r.loss}, {"accuracy", r.accuracy}, {"samples", r.samples}};
  out << j.dump() << "\n";
  if (!c.json_out.empty()) write_text(c.json_out, j.dump() + "\n");
  return kExitOk;
}

inline int run_generate(const RunConfig& c, std::ostream& out) {
  const Checkpoint<float> ck = load_checkpoint<float>(c.checkpoint);
  GenerationRequest req;
  req.seed_text = c.seed_text ? *c.seed_text : utf8::encode(ck.vocab.chars().front());
  req.length = c.length;
  req.temperature = c.temperature;
  req.rng_seed = c.seed;
  out << generate(ck.params, ck.vocab, req) << std::flush;
  return kExitOk;
}

inline int run_report(const RunConfig& c, std::ostream& out) {
  if (!c.labels.empty() && c.labels.size() != c.metrics_files.size()) {
    throw ArgumentError("give one --label per metrics file");
  }
  std::vector<ReportRow> rows;
  if (!c.literature.empty()) rows = read_literature_rows(c.literature);
  for (std::size_t k = 0; k < c.metrics_files.size(); ++k) {
    const std::string label = c.labels.empty()
                                  ? std::filesystem::path(c.metrics_files[k]).stem().string()
                                  : c.labels[k];
    rows.push_back(row_from_metrics(c.metrics_files[k], label));
  }
  const std::string table = c.table_format == "csv" ? render_csv(rows) : render_markdown(rows);
  if (c.table_output.empty()) {
    out << table;
  } else {
    write_text(c.table_output, table);
  }
  return kExitOk;
}

}  // namespace detail

/// Parses `args` (without the program name) and runs the subcommand.
/// Returns 0 on success, 1 on runtime errors, 2 on usage errors.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"charforge: character-level LSTM text generation"};
  app.name("charforge");
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare", "Load, clean and split a corpus into a cache file");
  prepare->add_option("--input", c.input, "Corpus file (.txt or play .csv)")->required();
  prepare->add_option("--output", c.output, "Corpus cache to write")->capture_default_str();
  prepare->add_option("--format", c.format, "Corpus format")
      ->check(CLI::IsMember({"auto", "txt", "csv"}))
      ->capture_default_str();
  prepare->add_option("--column", c.column, "CSV column holding the spoken lines")
      ->capture_default_str();
  prepare->add_flag("--lowercase,!--no-lowercase", c.lowercase,
                    "Lowercase (default: on for txt, off for csv)");
  prepare->add_flag("--no-strip-citations", c.no_strip_citations);
  prepare->add_flag("--no-strip-numbering", c.no_strip_numbering);
  prepare->add_flag("--no-collapse-whitespace", c.no_collapse_whitespace);
  prepare->add_option("--ratio", c.ratio, "Training fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  prepare->add_option("--vocab-scope", c.vocab_scope, "Build the dictionary from all text or train only")
      ->check(CLI::IsMember({"all", "train"}))
      ->capture_default_str();
  prepare->add_option("--max-bytes", c.max_bytes, "Keep only the first N bytes of cleaned text (0 = all)");

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint + metrics CSV");
  train->add_option("--corpus", c.corpus, "Corpus cache from `prepare`")->required();
  train->add_option("--checkpoint", c.checkpoint, "Final checkpoint path")->capture_default_str();
  train->add_option("--best-checkpoint", c.best_checkpoint,
                    "Best-validation-loss checkpoint (default: <checkpoint>.best)");
  train->add_option("--metrics", c.metrics, "Metrics CSV path")->capture_default_str();
  train->add_option("--report", c.report, "Train report JSON path ('' to skip)")->capture_default_str();
  train->add_option("--seq-len", c.seq_len)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--stride", c.stride)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--hidden", c.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lstm-layers", c.lstm_layers)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch", c.batch)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--epochs", c.epochs)->capture_default_str();
  train->add_option("--lr", c.lr)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--rho", c.rho)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train->add_option("--eps", c.eps)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--clip-norm", c.clip_norm)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--seed", c.seed)->envname("CHARFORGE_SEED")->capture_default_str();
  train->add_flag("--no-timing", c.no_timing, "Write 0 in the wall_seconds column");
  train->add_flag("--quiet", c.quiet, "No per-epoch progress lines");
  train->add_option("--sample-length", c.sample_length, "Characters sampled after training (0 = none)")
      ->capture_default_str();
  train->add_option("--sample-temperature", c.sample_temperature)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Loss and accuracy of a checkpoint on a corpus split");
  eval->add_option("--checkpoint", c.checkpoint)->required();
  eval->add_option("--corpus", c.corpus)->required();
  eval->add_option("--split", c.split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  eval->add_option("--stride", c.stride)->check(CLI::PositiveNumber)->capture_default_str();
  eval->add_option("--batch", c.batch)->check(CLI::PositiveNumber)->capture_default_str();
  eval->add_option("--json", c.json_out, "Also write the JSON result to this file");

  auto* gen = app.add_subcommand("generate", "Sample text from a checkpoint");
  gen->add_option("--checkpoint", c.checkpoint)->required();
  gen->add_option("--seed-text", c.seed_text, "Priming text (default: first vocabulary character)");
  gen->add_option("--length", c.length)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--temperature", c.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--seed", c.seed)->envname("CHARFORGE_SEED")->capture_default_str();

  auto* rep = app.add_subcommand("report", "Comparison table from one or more metrics CSVs");
  rep->add_option("metrics", c.metrics_files, "Metrics CSV files")->required();
  rep->add_option("--label", c.labels, "Dataset label per metrics file");
  rep->add_option("--literature", c.literature, "JSON sidecar with reference rows");
  rep->add_option("--format", c.table_format)
      ->check(CLI::IsMember({"markdown", "csv"}))
      ->capture_default_str();
  rep->add_option("--output", c.table_output, "Write the table here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  c.subcommand = app.get_subcommands().front()->get_name();
  if (c.subcommand == "train" && c.best_checkpoint.empty()) {
    c.best_checkpoint = c.checkpoint + ".best";
  }
  err << "# config: " << describe(c) << "\n";

  try {
    if (c.subcommand == "prepare") return detail::run_prepare(c, out);
    if (c.subcommand == "train") return detail::run_train(c, out);
    if (c.subcommand == "eval") return detail::run_eval(c, out);
    if (c.subcommand == "generate") return detail::run_generate(c, out);
    return detail::run_report(c, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace charforge::cli
