#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "charforge/corpus.hpp"
#include "charforge/error.hpp"
#include "charforge/numerics.hpp"
#include "charforge/rng.hpp"

namespace charforge {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_size = 128;
  std::size_t num_lstm_layers = 2;
  std::size_t seq_len = 40;

  void validate() const {
    // A single-symbol vocabulary is accepted: the model then predicts it with certainty.
    if (vocab_size < 1) throw ArgumentError("vocab_size must be at least 1");
    if (hidden_size < 1) throw ArgumentError("hidden_size must be at least 1");
    if (num_lstm_layers < 1) throw ArgumentError("num_lstm_layers must be at least 1");
    if (seq_len < 1) throw ArgumentError("seq_len must be at least 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One LSTM layer. Gate blocks along the 4H axis are ordered [i, f, g, o].
template <std::floating_point T>
struct LstmLayerParams {
  Matrix<T> w_x;  // 4H x D_in
  Matrix<T> w_h;  // 4H x H
  Matrix<T> b;    // 4H x 1

  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

template <std::floating_point T>
struct DenseParams {
  Matrix<T> w;  // V x H
  Matrix<T> b;  // V x 1

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

template <std::floating_point T>
struct ModelParams {
  ModelConfig config;
  std::vector<LstmLayerParams<T>> layers;
  DenseParams<T> dense;

  /// All tensors zero, shaped for `config`.
  static ModelParams zeros(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const std::size_t h = config.hidden_size;
    for (std::size_t l = 0; l < config.num_lstm_layers; ++l) {
      const std::size_t d_in = l == 0 ? config.vocab_size : h;
      p.layers.push_back({Matrix<T>(4 * h, d_in), Matrix<T>(4 * h, h), Matrix<T>(4 * h, 1)});
    }
    p.dense = {Matrix<T>(config.vocab_size, h), Matrix<T>(config.vocab_size, 1)};
    return p;
  }

  /// Tensors in canonical order: per layer w_x, w_h, b; then dense w, b.
  std::vector<Matrix<T>*> tensors() {
    std::vector<Matrix<T>*> out;
    for (auto& l : layers) {
      out.push_back(&l.w_x);
      out.push_back(&l.w_h);
      out.push_back(&l.b);
    }
    out.push_back(&dense.w);
    out.push_back(&dense.b);
    return out;
  }

  std::vector<const Matrix<T>*> tensors() const {
    std::vector<const Matrix<T>*> out;
    for (const auto& l : layers) {
      out.push_back(&l.w_x);
      out.push_back(&l.w_h);
      out.push_back(&l.b);
    }
    out.push_back(&dense.w);
    out.push_back(&dense.b);
    return out;
  }

  static std::vector<std::string> tensor_names(const ModelConfig& config) {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < config.num_lstm_layers; ++l) {
      const std::string prefix = "lstm." + std::to_string(l) + ".";
      names.push_back(prefix + "w_x");
      names.push_back(prefix + "w_h");
      names.push_back(prefix + "b");
    }
    names.push_back("dense.w");
    names.push_back("dense.b");
    return names;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
  }

  template <std::floating_point U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    for (const auto& l : layers) {
      out.layers.push_back({l.w_x.template cast<U>(), l.w_h.template cast<U>(),
                            l.b.template cast<U>()});
    }
    out.dense = {dense.w.template cast<U>(), dense.b.template cast<U>()};
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Same shapes as the parameters they belong to.
template <std::floating_point T>
using Gradients = ModelParams<T>;

/// Uniform(-s, s) weights with s = 1/sqrt(fan_in); zero biases except the
/// forget-gate block, which starts at 1. Draws are taken in double precision
/// so float and double models built from one seed agree up to rounding.
template <std::floating_point T = float>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto p = ModelParams<T>::zeros(config);
  Rng rng(seed);
  auto fill_uniform = [&rng](Matrix<T>& m, std::size_t fan_in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : m.flat()) v = static_cast<T>(rng.uniform(-s, s));
  };
  const std::size_t h = config.hidden_size;
  for (auto& layer : p.layers) {
    fill_uniform(layer.w_x, layer.w_x.cols());
    fill_uniform(layer.w_h, h);
    for (std::size_t j = h; j < 2 * h; ++j) layer.b(j, 0) = T{1};
  }
  fill_uniform(p.dense.w, h);
  return p;
}

// ---------------------------------------------------------------------------
// Single-sample cell

template <std::floating_point T>
struct CellStep {
  std::vector<T> h;
  std::vector<T> c;
  std::vector<T> i, f, g, o;
};

/// One LSTM step: a = W_x x + W_h h_prev + b; i,f,o = sigmoid, g = tanh;
/// c = f*c_prev + i*g; h = o*tanh(c).
template <std::floating_point T>
CellStep<T> lstm_cell_forward(std::span<const T> x, std::span<const T> h_prev,
                              std::span<const T> c_prev, const LstmLayerParams<T>& layer) {
  const std::size_t hs = layer.w_h.cols();
  if (layer.w_x.rows() != 4 * hs || layer.w_h.rows() != 4 * hs || layer.b.rows() != 4 * hs) {
    throw ShapeError("inconsistent LSTM layer parameter shapes");
  }
  if (x.size() != layer.w_x.cols() || h_prev.size() != hs || c_prev.size() != hs) {
    throw ShapeError("lstm_cell_forward: input " + std::to_string(x.size()) + ", state " +
                     std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size()) +
                     " do not match layer (" + std::to_string(layer.w_x.cols()) + " -> " +
                     std::to_string(hs) + ")");
  }
  std::vector<T> a(4 * hs, T{0});
  for (std::size_t j = 0; j < 4 * hs; ++j) {
    T acc{0};
    const auto wx = layer.w_x.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) acc += wx[k] * x[k];
    const auto wh = layer.w_h.row(j);
    for (std::size_t k = 0; k < hs; ++k) acc += wh[k] * h_prev[k];
    a[j] = acc + layer.b(j, 0);
  }
  CellStep<T> out;
  out.i.resize(hs);
  out.f.resize(hs);
  out.g.resize(hs);
  out.o.resize(hs);
  out.c.resize(hs);
  out.h.resize(hs);
  for (std::size_t k = 0; k < hs; ++k) {
    out.i[k] = sigmoid(a[k]);
    out.f[k] = sigmoid(a[hs + k]);
    out.g[k] = std::tanh(a[2 * hs + k]);
    out.o[k] = sigmoid(a[3 * hs + k]);
    out.c[k] = out.f[k] * c_prev[k] + out.i[k] * out.g[k];
    out.h[k] = out.o[k] * std::tanh(out.c[k]);
  }
  return out;
}

/// Recurrent state (h, c) per layer.
template <std::floating_point T>
struct LstmState {
  std::vector<std::vector<T>> h;
  std::vector<std::vector<T>> c;

  static LstmState zeros(const ModelConfig& config) {
    LstmState s;
    s.h.assign(config.num_lstm_layers, std::vector<T>(config.hidden_size, T{0}));
    s.c.assign(config.num_lstm_layers, std::vector<T>(config.hidden_size, T{0}));
    return s;
  }
};

/// Feeds one character through the stack, updating `state`; returns the
/// next-character distribution.
template <std::floating_point T>
std::vector<T> step(const ModelParams<T>& params, LstmState<T>& state, std::int32_t index) {
  const std::size_t v = params.config.vocab_size;
  if (index < 0 || static_cast<std::size_t>(index) >= v) {
    throw IndexError("input index " + std::to_string(index) + " out of range for V=" +
                     std::to_string(v));
  }
  std::vector<T> x(v, T{0});
  x[static_cast<std::size_t>(index)] = T{1};
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto cell = lstm_cell_forward<T>(x, state.h[l], state.c[l], params.layers[l]);
    state.h[l] = cell.h;
    state.c[l] = std::move(cell.c);
    x = std::move(cell.h);
  }
  std::vector<T> logits(v);
  for (std::size_t r = 0; r < v; ++r) {
    T acc{0};
    const auto w = params.dense.w.row(r);
    for (std::size_t k = 0; k < x.size(); ++k) acc += w[k] * x[k];
    logits[r] = acc + params.dense.b(r, 0);
  }
  std::vector<T> probs(v);
  softmax_into<T>(logits, probs);
  return probs;
}

// ---------------------------------------------------------------------------
// Batched forward / backward. Activations are stored feature-major
// (features x batch) so the inner loops run along the batch.

template <std::floating_point T>
struct LayerStep {
  Matrix<T> gates;  // 4H x N, post-activation [i, f, g, o]
  Matrix<T> c;      // H x N
  Matrix<T> h;      // H x N
};

template <std::floating_point T>
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::int32_t> inputs;           // N x T
  std::vector<std::vector<LayerStep<T>>> steps;  // [layer][t]
};

template <std::floating_point T>
struct ForwardResult {
  Matrix<T> probs;  // N x V
  ForwardCache<T> cache;
};

namespace detail {

template <std::floating_point T>
void activate_gates(Matrix<T>& a, std::size_t hs) {
  const std::size_t n = a.cols();
  for (std::size_t j = 0; j < 4 * hs; ++j) {
    T* row = a.data() + j * n;
    const bool is_candidate = j >= 2 * hs && j < 3 * hs;
    if (is_candidate) {
      for (std::size_t k = 0; k < n; ++k) row[k] = std::tanh(row[k]);
    } else {
      for (std::size_t k = 0; k < n; ++k) row[k] = sigmoid(row[k]);
    }
  }
}

inline void check_indices(std::span<const std::int32_t> ids, std::size_t v) {
  for (auto idx : ids) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= v) {
      throw IndexError("character index " + std::to_string(idx) + " out of range for V=" +
                       std::to_string(v));
    }
  }
}

}  // namespace detail

/// Runs every window through the stack from a zero state and returns the
/// next-character distribution after the last timestep.
template <std::floating_point T>
ForwardResult<T> forward(const ModelParams<T>& params, const SequenceSet& batch) {
  const ModelConfig& cfg = params.config;
  const std::size_t n = batch.size();
  const std::size_t steps = batch.seq_len;
  const std::size_t hs = cfg.hidden_size;
  const std::size_t v = cfg.vocab_size;
  if (n == 0) throw ArgumentError("forward on an empty batch");
  if (steps == 0) throw ArgumentError("forward with seq_len 0");
  if (batch.inputs.size() != n * steps) throw ShapeError("batch inputs do not match N x T");
  if (batch.vocab_size != 0 && batch.vocab_size != v) {
    throw ShapeError("batch vocabulary size " + std::to_string(batch.vocab_size) +
                     " does not match model V=" + std::to_string(v));
  }
  detail::check_indices(batch.inputs, v);

  ForwardResult<T> result;
  ForwardCache<T>& cache = result.cache;
  cache.batch = n;
  cache.seq_len = steps;
  cache.inputs = batch.inputs;
  cache.steps.resize(params.layers.size());

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    auto& out = cache.steps[l];
    out.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      LayerStep<T> st{Matrix<T>(4 * hs, n), Matrix<T>(hs, n), Matrix<T>(hs, n)};
      Matrix<T>& a = st.gates;
      if (l == 0) {
        for (std::size_t j = 0; j < 4 * hs; ++j) {
          const T* wrow = layer.w_x.data() + j * v;
          T* arow = a.data() + j * n;
          for (std::size_t s = 0; s < n; ++s) {
            arow[s] = wrow[static_cast<std::size_t>(batch.inputs[s * steps + t])];
          }
        }
      } else {
        kernels::gemm_nn_acc(layer.w_x, cache.steps[l - 1][t].h, a);
      }
      if (t > 0) kernels::gemm_nn_acc(layer.w_h, out[t - 1].h, a);
      for (std::size_t j = 0; j < 4 * hs; ++j) {
        const T bj = layer.b(j, 0);
        T* arow = a.data() + j * n;
        for (std::size_t s = 0; s < n; ++s) arow[s] += bj;
      }
      detail::activate_gates(a, hs);
      for (std::size_t k = 0; k < hs; ++k) {
        const T* ig = a.data() + k * n;
        const T* fg = a.data() + (hs + k) * n;
        const T* gg = a.data() + (2 * hs + k) * n;
        const T* og = a.data() + (3 * hs + k) * n;
        const T* cprev = t > 0 ? out[t - 1].c.data() + k * n : nullptr;
        T* c = st.c.data() + k * n;
        T* h = st.h.data() + k * n;
        for (std::size_t s = 0; s < n; ++s) {
          const T carry = cprev ? fg[s] * cprev[s] : T{0};
          c[s] = carry + ig[s] * gg[s];
          h[s] = og[s] * std::tanh(c[s]);
        }
      }
      out.push_back(std::move(st));
    }
  }

  const Matrix<T>& top = cache.steps.back().back().h;
  Matrix<T> logits(v, n);
  kernels::gemm_nn_acc(params.dense.w, top, logits);
  result.probs = Matrix<T>(n, v);
  std::vector<T> column(v);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < v; ++r) column[r] = logits(r, s) + params.dense.b(r, 0);
    softmax_into<T>(column, result.probs.row(s));
  }
  return result;
}

/// Exact gradients of the batch-mean cross-entropy via backpropagation through time.
template <std::floating_point T>
Gradients<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                      const Matrix<T>& probs, std::span<const std::int32_t> targets) {
  const ModelConfig& cfg = params.config;
  const std::size_t n = cache.batch;
  const std::size_t steps = cache.seq_len;
  const std::size_t hs = cfg.hidden_size;
  const std::size_t v = cfg.vocab_size;
  if (cache.steps.size() != params.layers.size() || n == 0 ||
      cache.steps.front().size() != steps || probs.rows() != n || probs.cols() != v ||
      targets.size() != n) {
    throw ShapeError("backward: cache, probabilities and targets do not match this model");
  }
  detail::check_indices(targets, v);

  Gradients<T> grads = Gradients<T>::zeros(cfg);
  const T inv_n = T{1} / static_cast<T>(n);

  // dL/dlogits = (probs - onehot(target)) / N, feature-major.
  Matrix<T> dz(v, n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < v; ++r) dz(r, s) = probs(s, r);
    dz(static_cast<std::size_t>(targets[s]), s) -= T{1};
  }
  for (T& x : dz.flat()) x *= inv_n;

  Matrix<T> scratch;
  const Matrix<T>& top = cache.steps.back().back().h;
  kernels::gemm_nt_acc(dz, top, grads.dense.w, scratch);
  for (std::size_t r = 0; r < v; ++r) {
    T acc{0};
    for (std::size_t s = 0; s < n; ++s) acc += dz(r, s);
    grads.dense.b(r, 0) = acc;
  }

  // Gradient arriving at each layer's hidden output from above, per timestep.
  std::vector<Matrix<T>> from_above(steps, Matrix<T>(hs, n));
  kernels::gemm_tn_acc(params.dense.w, dz, from_above[steps - 1]);

  Matrix<T> da(4 * hs, n);
  Matrix<T> dh(hs, n);
  Matrix<T> dc(hs, n);
  Matrix<T> dh_rec(hs, n);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    auto& g = grads.layers[li];
    const auto& rec = cache.steps[li];
    std::vector<Matrix<T>> to_below;
    if (li > 0) to_below.assign(steps, Matrix<T>(hs, n));
    dh_rec.fill(T{0});
    dc.fill(T{0});

    for (std::size_t t = steps; t-- > 0;) {
      const LayerStep<T>& st = rec[t];
      const Matrix<T>* c_prev = t > 0 ? &rec[t - 1].c : nullptr;
      for (std::size_t k = 0; k < hs; ++k) {
        const T* ig = st.gates.data() + k * n;
        const T* fg = st.gates.data() + (hs + k) * n;
        const T* gg = st.gates.data() + (2 * hs + k) * n;
        const T* og = st.gates.data() + (3 * hs + k) * n;
        const T* c = st.c.data() + k * n;
        const T* cp = c_prev ? c_prev->data() + k * n : nullptr;
        const T* above = from_above[t].data() + k * n;
        const T* rh = dh_rec.data() + k * n;
        T* dck = dc.data() + k * n;
        T* dai = da.data() + k * n;
        T* daf = da.data() + (hs + k) * n;
        T* dag = da.data() + (2 * hs + k) * n;
        T* dao = da.data() + (3 * hs + k) * n;
        for (std::size_t s = 0; s < n; ++s) {
          const T dhs = rh[s] + above[s];
          const T tc = std::tanh(c[s]);
          const T d_o = dhs * tc;
          const T dcs = dck[s] + dhs * og[s] * (T{1} - tc * tc);
          const T d_i = dcs * gg[s];
          const T d_g = dcs * ig[s];
          const T d_f = cp ? dcs * cp[s] : T{0};
          dai[s] = d_i * ig[s] * (T{1} - ig[s]);
          daf[s] = d_f * fg[s] * (T{1} - fg[s]);
          dag[s] = d_g * (T{1} - gg[s] * gg[s]);
          dao[s] = d_o * og[s] * (T{1} - og[s]);
          dck[s] = dcs * fg[s];
        }
      }

      for (std::size_t j = 0; j < 4 * hs; ++j) {
        const T* row = da.data() + j * n;
        T acc{0};
        for (std::size_t s = 0; s < n; ++s) acc += row[s];
        g.b(j, 0) += acc;
      }
      if (li == 0) {
        for (std::size_t j = 0; j < 4 * hs; ++j) {
          const T* row = da.data() + j * n;
          T* grow = g.w_x.data() + j * v;
          for (std::size_t s = 0; s < n; ++s) {
            grow[static_cast<std::size_t>(cache.inputs[s * steps + t])] += row[s];
          }
        }
      } else {
        kernels::gemm_nt_acc(da, cache.steps[li - 1][t].h, g.w_x, scratch);
        kernels::gemm_tn_acc(layer.w_x, da, to_below[t]);
      }
      dh_rec.fill(T{0});
      if (t > 0) {
        kernels::gemm_nt_acc(da, rec[t - 1].h, g.w_h, scratch);
        kernels::gemm_tn_acc(layer.w_h, da, dh_rec);
      }
    }
    if (li > 0) from_above = std::move(to_below);
  }
  return grads;
}

/// Mean cross-entropy of a probability matrix against targets.
template <std::floating_point T>
double mean_cross_entropy(const Matrix<T>& probs, std::span<const std::int32_t> targets) {
  double sum = 0.0;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    sum += static_cast<double>(cross_entropy<T>(probs.row(s), static_cast<std::size_t>(targets[s])));
  }
  return sum / static_cast<double>(targets.size());
}

}  // namespace charforge
