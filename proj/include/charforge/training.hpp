#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "charforge/checkpoint.hpp"
#include "charforge/corpus.hpp"
#include "charforge/model.hpp"
#include "charforge/rng.hpp"

namespace charforge {

struct RmsPropConfig {
  double lr = 1e-2;
  double rho = 0.9;
  double eps = 1e-7;
  double clip_norm = 5.0;

  void validate() const {
    if (!(lr > 0) || !(rho > 0 && rho < 1) || !(eps > 0) || !(clip_norm > 0)) {
      throw ArgumentError("RMSProp hyperparameters must be positive (and rho < 1)");
    }
  }
};

/// RMSProp running mean of squared gradients, one accumulator per parameter.
template <std::floating_point T>
struct OptimizerState {
  RmsPropConfig hyper;
  ModelParams<T> cache;

  static OptimizerState create(const ModelConfig& config, const RmsPropConfig& hyper) {
    hyper.validate();
    return {hyper, ModelParams<T>::zeros(config)};
  }
};

template <std::floating_point T>
double global_norm(const Gradients<T>& grads) {
  double sq = 0.0;
  for (const auto* t : grads.tensors()) {
    for (T v : t->flat()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(sq);
}

/// Rescales all gradients together when their global L2 norm exceeds
/// `clip_norm`. Returns the norm before clipping.
template <std::floating_point T>
double clip_gradients(Gradients<T>& grads, double clip_norm) {
  const double norm = global_norm(grads);
  if (norm > clip_norm) {
    const T scale = static_cast<T>(clip_norm / norm);
    for (auto* t : grads.tensors()) {
      for (T& v : t->flat()) v *= scale;
    }
  }
  return norm;
}

/// cache = rho*cache + (1-rho)*g^2;  param -= lr*g / (sqrt(cache) + eps)
template <std::floating_point T>
void rmsprop_step(ModelParams<T>& params, const Gradients<T>& grads, OptimizerState<T>& state) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  auto cs = state.cache.tensors();
  if (ps.size() != gs.size() || ps.size() != cs.size()) {
    throw ShapeError("rmsprop_step: parameter, gradient and cache layouts differ");
  }
  const T lr = static_cast<T>(state.hyper.lr);
  const T rho = static_cast<T>(state.hyper.rho);
  const T one_minus_rho = static_cast<T>(1.0 - state.hyper.rho);
  const T eps = static_cast<T>(state.hyper.eps);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (!ps[k]->same_shape(*gs[k]) || !ps[k]->same_shape(*cs[k])) {
      throw ShapeError("rmsprop_step: shape mismatch in tensor " + std::to_string(k));
    }
    auto p = ps[k]->flat();
    auto g = gs[k]->flat();
    auto c = cs[k]->flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
      c[i] = rho * c[i] + one_minus_rho * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(c[i]) + eps);
    }
  }
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

namespace detail {

/// Per-sample loss and hit count of one batch, summed in sample order.
template <std::floating_point T>
void accumulate_metrics(const Matrix<T>& probs, std::span<const std::int32_t> targets,
                        double& loss_sum, std::size_t& hits) {
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const auto row = probs.row(s);
    const auto target = static_cast<std::size_t>(targets[s]);
    loss_sum += static_cast<double>(cross_entropy<T>(row, target));
    if (argmax<T>(row) == target) ++hits;
  }
}

}  // namespace detail

/// Mean cross-entropy and argmax accuracy, forward only.
template <std::floating_point T>
EvalResult evaluate(const ModelParams<T>& params, const SequenceSet& dataset,
                    std::size_t batch_size = 128) {
  if (dataset.empty()) throw ArgumentError("evaluate on an empty dataset");
  if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t first = 0; first < dataset.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, dataset.size() - first);
    const SequenceSet batch = dataset.slice(first, count);
    const auto fwd = forward(params, batch);
    detail::accumulate_metrics(fwd.probs, batch.targets, loss_sum, hits);
  }
  const auto n = static_cast<double>(dataset.size());
  return {loss_sum / n, static_cast<double>(hits) / n, dataset.size()};
}

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t optimizer_steps = 0;
};

/// One pass over `train_set` in an order shuffled by `epoch_seed`. Metrics
/// are taken from each batch's forward pass before its update.
template <std::floating_point T>
EpochStats train_epoch(ModelParams<T>& params, OptimizerState<T>& opt,
                       const SequenceSet& train_set, std::size_t batch_size,
                       std::uint64_t epoch_seed) {
  if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
  if (train_set.empty()) throw ArgumentError("train_epoch on an empty dataset");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed);
  shuffle(std::span<std::size_t>(order), rng);

  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t first = 0; first < order.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - first);
    const SequenceSet batch =
        train_set.gather(std::span<const std::size_t>(order).subspan(first, count));
    auto fwd = forward(params, batch);
    detail::accumulate_metrics(fwd.probs, batch.targets, loss_sum, hits);
    Gradients<T> grads = backward(params, fwd.cache, fwd.probs, batch.targets);
    clip_gradients(grads, opt.hyper.clip_norm);
    rmsprop_step(params, grads, opt);
    ++stats.optimizer_steps;
  }
  const auto n = static_cast<double>(train_set.size());
  stats.loss = loss_sum / n;
  stats.accuracy = static_cast<double>(hits) / n;
  return stats;
}

// ---------------------------------------------------------------------------
// Metrics and the epoch loop

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds";

inline std::string format_metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f", m.epoch, m.train_loss, m.train_acc,
                m.val_loss, m.val_acc, m.wall_seconds);
  return buf;
}

/// Parses a metrics CSV written by fit().
inline std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  detail::CsvReader reader(bytes);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw SchemaError("metrics CSV '" + path.string() + "' is empty");
  std::string header;
  for (const auto& f : fields) header += (header.empty() ? "" : ",") + f;
  if (header != kMetricsHeader) {
    throw SchemaError("metrics CSV '" + path.string() + "' has unexpected header: " + header);
  }
  std::vector<EpochMetrics> rows;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != 6) {
      throw SchemaError("metrics CSV row " + std::to_string(reader.record_number()) +
                        ": expected 6 fields");
    }
    try {
      rows.push_back({std::stoul(fields[0]), std::stod(fields[1]), std::stod(fields[2]),
                      std::stod(fields[3]), std::stod(fields[4]), std::stod(fields[5])});
    } catch (const std::exception&) {
      throw SchemaError("metrics CSV row " + std::to_string(reader.record_number()) +
                        ": non-numeric field");
    }
  }
  return rows;
}

struct FitOptions {
  ModelConfig model;
  RmsPropConfig optimizer;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 42;
  std::filesystem::path metrics_csv;      // empty: no CSV
  std::filesystem::path checkpoint;       // empty: no final checkpoint
  std::filesystem::path best_checkpoint;  // empty: no best-val-loss checkpoint
  bool record_wall_time = true;           // false writes 0 so CSVs are byte-reproducible
  std::string config_echo;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  // Filled in when a sample is generated after training.
  std::optional<std::string> sample_text;
  std::optional<double> sample_temperature;
  std::optional<double> sample_repetition_rate;
  std::size_t repetition_ngram = 4;
};

template <std::floating_point T>
struct FitResult {
  TrainReport report;
  ModelParams<T> params;
};

/// Trains for `epochs` epochs, evaluating on `val_set` after each one and
/// appending a metrics row. The weight-init and shuffle streams are derived
/// from `options.seed`.
template <std::floating_point T = float>
FitResult<T> fit(const FitOptions& options, const Vocabulary& vocab, const SequenceSet& train_set,
                 const SequenceSet& val_set) {
  if (options.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (options.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  ModelConfig cfg = options.model;
  cfg.vocab_size = vocab.size();
  cfg.seq_len = train_set.seq_len;
  cfg.validate();
  if (train_set.vocab_size != cfg.vocab_size || (!val_set.empty() && val_set.vocab_size != cfg.vocab_size)) {
    throw ShapeError("datasets were encoded with a different vocabulary");
  }

  FitResult<T> result{{}, init_params<T>(cfg, mix_seed(options.seed, 0))};
  auto opt = OptimizerState<T>::create(cfg, options.optimizer);
  TrainReport& report = result.report;
  report.config_echo = options.config_echo;
  report.seed = options.seed;
  report.final_checkpoint = options.checkpoint;
  report.best_checkpoint = options.best_checkpoint;

  std::ofstream csv;
  if (!options.metrics_csv.empty()) {
    csv.open(options.metrics_csv, std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot open metrics CSV '" + options.metrics_csv.string() + "'");
    csv << kMetricsHeader << '\n';
    csv.flush();
  }

  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const EpochStats st = train_epoch(result.params, opt, train_set, options.batch_size,
                                      mix_seed(options.seed, epoch));
    EpochMetrics m{epoch, st.loss, st.accuracy, 0.0, 0.0, 0.0};
    if (!val_set.empty()) {
      const EvalResult ev = evaluate(result.params, val_set, options.batch_size);
      m.val_loss = ev.loss;
      m.val_acc = ev.accuracy;
    }
    if (options.record_wall_time) {
      m.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    report.epochs.push_back(m);
    if (csv.is_open()) {
      csv << format_metrics_row(m) << '\n';
      csv.flush();
      if (!csv) throw IoError("error writing metrics CSV '" + options.metrics_csv.string() + "'");
    }
    if (!val_set.empty() && m.val_loss < best_val) {
      best_val = m.val_loss;
      report.best_epoch = epoch;
      if (!options.best_checkpoint.empty()) {
        save_checkpoint(result.params, vocab, options.best_checkpoint);
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }
  if (!options.checkpoint.empty()) save_checkpoint(result.params, vocab, options.checkpoint);
  return result;
}

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& m : r.epochs) {
    epochs.push_back({{"epoch", m.epoch},
                      {"train_loss", m.train_loss},
                      {"train_acc", m.train_acc},
                      {"val_loss", m.val_loss},
                      {"val_acc", m.val_acc},
                      {"wall_seconds", m.wall_seconds}});
  }
  nlohmann::json j = {{"config", r.config_echo},
                      {"seed", r.seed},
                      {"final_checkpoint", r.final_checkpoint.string()},
                      {"best_checkpoint", r.best_checkpoint.string()},
                      {"best_epoch", r.best_epoch},
                      {"epochs", epochs}};
  if (r.sample_text) {
    j["sample"] = {{"text", *r.sample_text},
                   {"temperature", r.sample_temperature.value_or(0.0)},
                   {"repetition_ngram", r.repetition_ngram},
                   {"repetition_rate", r.sample_repetition_rate.value_or(0.0)}};
  }
  return j;
}

inline void write_train_report(const TrainReport& r, const std::filesystem::path& path) {
  detail::write_file(path, to_json(r).dump(2) + "\n");
}

}  // namespace charforge
