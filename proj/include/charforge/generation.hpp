#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charforge/corpus.hpp"
#include "charforge/model.hpp"
#include "charforge/rng.hpp"

namespace charforge {

struct GenerationRequest {
  std::string seed_text;
  std::size_t length = 400;
  double temperature = 0.5;
  std::uint64_t rng_seed = 42;
};

/// softmax(ln(p) / temperature), computed in double. Entries that are exactly
/// zero stay zero at every temperature; others are floored at 1e-12 before the log.
template <std::floating_point T>
std::vector<double> temper(std::span<const T> probs, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ArgumentError("temperature must be a positive finite number");
  }
  if (probs.empty()) throw ArgumentError("cannot sample from an empty distribution");
  double total = 0.0;
  for (T p : probs) {
    if (!std::isfinite(p) || p < T{0}) throw ArgumentError("probabilities must be finite and >= 0");
    total += static_cast<double>(p);
  }
  if (std::abs(total - 1.0) > 1e-3) {
    throw ArgumentError("probabilities sum to " + std::to_string(total) + ", not 1");
  }
  std::vector<double> logits(probs.size(), -std::numeric_limits<double>::infinity());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] == T{0}) continue;
    logits[k] = std::log(std::max(static_cast<double>(probs[k]), kProbabilityFloor)) / temperature;
    mx = std::max(mx, logits[k]);
  }
  std::vector<double> out(probs.size(), 0.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] == T{0}) continue;
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

/// Draws one index by inverse CDF on a single uniform variate.
template <std::floating_point T>
std::size_t sample_index(std::span<const T> probs, double temperature, Rng& rng) {
  const std::vector<double> tempered = temper(probs, temperature);
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < tempered.size(); ++k) {
    if (tempered[k] <= 0.0) continue;
    cum += tempered[k];
    last_positive = k;
    if (u < cum) return k;
  }
  // Rounding left the cumulative sum just below u.
  return last_positive;
}

template <std::floating_point T>
std::size_t sample_index(const std::vector<T>& probs, double temperature, Rng& rng) {
  return sample_index(std::span<const T>(probs), temperature, rng);
}

/// Warms the recurrent state on the seed text, then samples `length`
/// characters, feeding each one back in. The seed itself is not returned.
template <std::floating_point T>
std::string generate(const ModelParams<T>& params, const Vocabulary& vocab,
                     const GenerationRequest& request) {
  if (request.length < 1) throw ArgumentError("generation length must be at least 1");
  if (!(request.temperature > 0.0)) throw ArgumentError("temperature must be positive");
  if (vocab.size() != params.config.vocab_size) {
    throw ShapeError("vocabulary size does not match the model");
  }
  const std::u32string seed = utf8::decode(request.seed_text);
  if (seed.empty()) throw ArgumentError("seed text must contain at least one character");
  std::vector<std::int32_t> ids;
  ids.reserve(seed.size());
  for (std::size_t pos = 0; pos < seed.size(); ++pos) {
    if (!vocab.contains(seed[pos])) {
      throw DataError("seed character " + utf8::describe(seed[pos]) + " at position " +
                      std::to_string(pos) + " is not in the model vocabulary");
    }
    ids.push_back(vocab.index_of(seed[pos]));
  }

  Rng rng(request.rng_seed);
  auto state = LstmState<T>::zeros(params.config);
  std::vector<T> probs;
  for (auto id : ids) probs = step(params, state, id);

  std::string out;
  for (std::size_t n = 0; n < request.length; ++n) {
    const auto next = static_cast<std::int32_t>(sample_index<T>(probs, request.temperature, rng));
    utf8::append(out, vocab.char_of(next));
    if (n + 1 < request.length) probs = step(params, state, next);
  }
  return out;
}

/// 1 - unique/total over sliding character n-grams; 0 when the text is shorter than n.
inline double repetition_rate(std::string_view text, std::size_t n) {
  if (n < 1) throw ArgumentError("n-gram size must be at least 1");
  const std::u32string cps = utf8::decode(text);
  if (cps.size() < n) return 0.0;
  const std::size_t total = cps.size() - n + 1;
  std::set<std::u32string_view> unique;
  const std::u32string_view view(cps);
  for (std::size_t i = 0; i < total; ++i) unique.insert(view.substr(i, n));
  return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(total);
}

}  // namespace charforge
