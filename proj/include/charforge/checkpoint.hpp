#pragma once

// Binary container shared by model checkpoints and prepared-corpus caches.
//
//   bytes 0-3   magic "CFRG"
//   bytes 4-7   format version, u32 little-endian (currently 1)
//   bytes 8-11  metadata length L, u32 little-endian
//   L bytes     UTF-8 JSON metadata, including a "tensors" manifest of
//               {name, dtype, shape, offset, nbytes}; offsets are relative to
//               the start of the blob section
//   blobs       raw little-endian data in manifest order
//   8 bytes     u64 little-endian count of every byte before this trailer

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "charforge/corpus.hpp"
#include "charforge/error.hpp"
#include "charforge/model.hpp"

namespace charforge {

inline constexpr std::string_view kContainerMagic = "CFRG";
inline constexpr std::uint32_t kContainerVersion = 1;

struct Blob {
  std::string name;
  std::string dtype;  // "f32", "f64" or "u8"
  std::vector<std::size_t> shape;
  std::string bytes;
};

struct Container {
  nlohmann::json metadata;  // without the "tensors" manifest
  std::vector<Blob> blobs;

  const Blob& blob(std::string_view name) const {
    for (const auto& b : blobs) {
      if (b.name == name) return b;
    }
    throw FormatError("container has no tensor named '" + std::string(name) + "'");
  }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

template <std::floating_point U, std::floating_point T>
std::string pack(const Matrix<T>& m) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  std::string out;
  out.reserve(m.size() * sizeof(U));
  for (T v : m.flat()) {
    const Bits bits = std::bit_cast<Bits>(static_cast<U>(v));
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }
  return out;
}

template <std::floating_point U, std::floating_point T>
void unpack(std::string_view bytes, Matrix<T>& m) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  for (std::size_t k = 0; k < m.size(); ++k) {
    const auto bits = static_cast<Bits>(get_le(bytes, k * sizeof(U), sizeof(U)));
    m.flat()[k] = static_cast<T>(std::bit_cast<U>(bits));
  }
}

inline std::size_t dtype_size(std::string_view dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  if (dtype == "u8") return 1;
  throw FormatError("unknown tensor dtype '" + std::string(dtype) + "'");
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

inline nlohmann::json vocabulary_to_json(const Vocabulary& vocab) {
  auto arr = nlohmann::json::array();
  for (char32_t c : vocab.chars()) arr.push_back(utf8::encode(c));
  return arr;
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& arr) {
  std::vector<char32_t> chars;
  for (const auto& item : arr) {
    const std::u32string cps = utf8::decode(item.get<std::string>());
    if (cps.size() != 1) throw FormatError("vocabulary entry is not a single character");
    chars.push_back(cps[0]);
  }
  return Vocabulary(std::move(chars));
}

}  // namespace detail

inline std::string serialize_container(const Container& c) {
  nlohmann::json meta = c.metadata;
  auto manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : c.blobs) {
    std::size_t count = 1;
    for (auto d : b.shape) count *= d;
    if (count * detail::dtype_size(b.dtype) != b.bytes.size()) {
      throw ShapeError("tensor '" + b.name + "' byte length does not match its shape");
    }
    manifest.push_back(
        {{"name", b.name}, {"dtype", b.dtype}, {"shape", b.shape}, {"offset", offset},
         {"nbytes", b.bytes.size()}});
    offset += b.bytes.size();
  }
  meta["tensors"] = manifest;
  const std::string header = meta.dump();

  std::string out;
  out.append(kContainerMagic);
  detail::put_u32(out, kContainerVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const auto& b : c.blobs) out += b.bytes;
  detail::put_u64(out, out.size());
  return out;
}

inline Container parse_container(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != kContainerMagic) {
    throw FormatError("not a checkpoint (bad magic bytes)");
  }
  if (bytes.size() < 12 + 8) throw FormatError("checkpoint truncated: file too short");
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != kContainerVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kContainerVersion) + ")");
  }
  const std::uint64_t recorded = detail::get_le(bytes, bytes.size() - 8, 8);
  if (recorded != bytes.size() - 8) {
    throw FormatError("checkpoint integrity check failed: length " +
                      std::to_string(bytes.size() - 8) + " != recorded " +
                      std::to_string(recorded) + " (truncated or corrupted)");
  }
  const auto header_len = static_cast<std::size_t>(detail::get_le(bytes, 8, 4));
  if (12 + header_len > bytes.size() - 8) throw FormatError("checkpoint header length overruns file");

  Container c;
  try {
    c.metadata = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const std::size_t base = 12 + header_len;
  const std::size_t blob_bytes = bytes.size() - 8 - base;
  try {
    for (const auto& t : c.metadata.at("tensors")) {
      Blob b;
      b.name = t.at("name").get<std::string>();
      b.dtype = t.at("dtype").get<std::string>();
      b.shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto off = t.at("offset").get<std::size_t>();
      const auto len = t.at("nbytes").get<std::size_t>();
      std::size_t count = 1;
      for (auto d : b.shape) count *= d;
      if (off + len > blob_bytes || count * detail::dtype_size(b.dtype) != len) {
        throw FormatError("tensor '" + b.name + "' does not fit the blob section");
      }
      b.bytes.assign(bytes.substr(base + off, len));
      c.blobs.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed tensor manifest: ") + e.what());
  }
  c.metadata.erase("tensors");
  return c;
}

inline void write_container(const std::filesystem::path& path, const Container& c) {
  detail::write_file(path, serialize_container(c));
}

inline Container read_container(const std::filesystem::path& path) {
  return parse_container(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Model checkpoints

template <std::floating_point T>
constexpr const char* precision_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

/// Float models store f32 blobs; double models store f64 so the round trip
/// stays lossless in either precision.
template <std::floating_point T>
void save_checkpoint(const ModelParams<T>& params, const Vocabulary& vocab,
                     const std::filesystem::path& path) {
  const ModelConfig& cfg = params.config;
  if (vocab.size() != cfg.vocab_size) {
    throw ShapeError("vocabulary size " + std::to_string(vocab.size()) +
                     " does not match model V=" + std::to_string(cfg.vocab_size));
  }
  Container c;
  c.metadata = {{"kind", "model"},
                {"config",
                 {{"vocab_size", cfg.vocab_size},
                  {"hidden_size", cfg.hidden_size},
                  {"num_lstm_layers", cfg.num_lstm_layers},
                  {"seq_len", cfg.seq_len}}},
                {"gate_order", "ifgo"},
                {"precision", precision_name<T>()},
                {"vocabulary", detail::vocabulary_to_json(vocab)}};
  const auto names = ModelParams<T>::tensor_names(cfg);
  const auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const Matrix<T>& m = *tensors[k];
    c.blobs.push_back({names[k], sizeof(T) == 4 ? "f32" : "f64", {m.rows(), m.cols()},
                       detail::pack<T>(m)});
  }
  write_container(path, c);
}

template <std::floating_point T>
struct Checkpoint {
  ModelParams<T> params;
  Vocabulary vocab;
};

template <std::floating_point T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path);
  try {
    if (c.metadata.at("kind") != "model") throw FormatError("container does not hold a model");
    const auto& jc = c.metadata.at("config");
    ModelConfig cfg;
    cfg.vocab_size = jc.at("vocab_size").get<std::size_t>();
    cfg.hidden_size = jc.at("hidden_size").get<std::size_t>();
    cfg.num_lstm_layers = jc.at("num_lstm_layers").get<std::size_t>();
    cfg.seq_len = jc.at("seq_len").get<std::size_t>();
    Checkpoint<T> out{ModelParams<T>::zeros(cfg),
                      detail::vocabulary_from_json(c.metadata.at("vocabulary"))};
    if (out.vocab.size() != cfg.vocab_size) throw FormatError("vocabulary size disagrees with config");
    const auto names = ModelParams<T>::tensor_names(cfg);
    auto tensors = out.params.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const Blob& b = c.blob(names[k]);
      Matrix<T>& m = *tensors[k];
      if (b.shape.size() != 2 || b.shape[0] != m.rows() || b.shape[1] != m.cols()) {
        throw FormatError("tensor '" + names[k] + "' has the wrong shape");
      }
      if (b.dtype == "f32") {
        detail::unpack<float>(b.bytes, m);
      } else if (b.dtype == "f64") {
        detail::unpack<double>(b.bytes, m);
      } else {
        throw FormatError("tensor '" + names[k] + "' has non-float dtype " + b.dtype);
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Prepared-corpus cache

struct PreparedCorpus {
  std::string source_id;
  Origin origin = Origin::plain_text;
  CleaningRules rules;
  std::string text;  // cleaned UTF-8
  double split_ratio = 0.7;
  bool vocab_from_train_only = false;
  Vocabulary vocab;

  CorpusSplit split_text() const { return split(text, split_ratio); }
};

/// Load, clean, and build the dictionary from either the whole text or the
/// training prefix.
inline PreparedCorpus prepare_corpus(const RawText& raw, const CleaningRules& rules, double ratio,
                                     bool vocab_from_train_only,
                                     std::size_t max_bytes = static_cast<std::size_t>(-1)) {
  PreparedCorpus pc;
  pc.source_id = raw.source_id;
  pc.origin = raw.origin;
  pc.rules = rules;
  pc.text = truncate_utf8(clean(raw, rules), max_bytes);
  pc.split_ratio = ratio;
  pc.vocab_from_train_only = vocab_from_train_only;
  const CorpusSplit parts = split(pc.text, ratio);
  pc.vocab = build_vocabulary(vocab_from_train_only ? parts.train_text : pc.text);
  return pc;
}

inline void save_corpus_cache(const PreparedCorpus& pc, const std::filesystem::path& path) {
  Container c;
  c.metadata = {{"kind", "corpus"},
                {"source", pc.source_id},
                {"origin", to_string(pc.origin)},
                {"cleaning",
                 {{"strip_bracket_citations", pc.rules.strip_bracket_citations},
                  {"strip_line_numbering", pc.rules.strip_line_numbering},
                  {"lowercase", pc.rules.lowercase},
                  {"collapse_whitespace", pc.rules.collapse_whitespace}}},
                {"split_ratio", pc.split_ratio},
                {"vocab_scope", pc.vocab_from_train_only ? "train" : "all"},
                {"vocabulary", detail::vocabulary_to_json(pc.vocab)}};
  c.blobs.push_back({"text", "u8", {pc.text.size()}, pc.text});
  write_container(path, c);
}

inline PreparedCorpus load_corpus_cache(const std::filesystem::path& path) {
  const Container c = read_container(path);
  try {
    if (c.metadata.at("kind") != "corpus") throw FormatError("container does not hold a corpus");
    PreparedCorpus pc;
    pc.source_id = c.metadata.at("source").get<std::string>();
    pc.origin = c.metadata.at("origin") == "play_csv" ? Origin::play_csv : Origin::plain_text;
    const auto& jr = c.metadata.at("cleaning");
    pc.rules.strip_bracket_citations = jr.at("strip_bracket_citations").get<bool>();
    pc.rules.strip_line_numbering = jr.at("strip_line_numbering").get<bool>();
    pc.rules.lowercase = jr.at("lowercase").get<bool>();
    pc.rules.collapse_whitespace = jr.at("collapse_whitespace").get<bool>();
    pc.split_ratio = c.metadata.at("split_ratio").get<double>();
    pc.vocab_from_train_only = c.metadata.at("vocab_scope") == "train";
    pc.vocab = detail::vocabulary_from_json(c.metadata.at("vocabulary"));
    pc.text = c.blob("text").bytes;
    (void)utf8::decode(pc.text);
    return pc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed corpus cache metadata: ") + e.what());
  }
}

}  // namespace charforge
