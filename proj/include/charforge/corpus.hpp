#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "charforge/error.hpp"
#include "charforge/numerics.hpp"
#include "charforge/utf8.hpp"

namespace charforge {

enum class Origin { plain_text, play_csv };

inline const char* to_string(Origin o) { return o == Origin::plain_text ? "plain_text" : "play_csv"; }

struct RawText {
  std::string source_id;
  std::string text;  // UTF-8
  Origin origin = Origin::plain_text;
};

struct CleaningRules {
  bool strip_bracket_citations = true;
  bool strip_line_numbering = true;
  bool lowercase = false;
  bool collapse_whitespace = true;

  /// Lowercasing is on for prose corpora and off for play scripts.
  static CleaningRules defaults_for(Origin origin) {
    CleaningRules r;
    r.lowercase = origin == Origin::plain_text;
    return r;
  }
};

struct CorpusSplit {
  std::string train_text;
  std::string test_text;
  double ratio = 0.7;
};

/// Bijective character <-> index dictionary, characters sorted by code point.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Builds from an explicit character list; must be strictly increasing.
  explicit Vocabulary(std::vector<char32_t> chars) : chars_(std::move(chars)) {
    if (chars_.empty()) throw DataError("vocabulary must contain at least one character");
    for (std::size_t i = 1; i < chars_.size(); ++i) {
      if (chars_[i - 1] >= chars_[i]) {
        throw DataError("vocabulary characters must be unique and sorted by code point");
      }
    }
  }

  std::size_t size() const noexcept { return chars_.size(); }
  const std::vector<char32_t>& chars() const noexcept { return chars_; }

  bool contains(char32_t c) const { return std::binary_search(chars_.begin(), chars_.end(), c); }

  std::int32_t index_of(char32_t c) const {
    auto it = std::lower_bound(chars_.begin(), chars_.end(), c);
    if (it == chars_.end() || *it != c) {
      throw DataError("character " + utf8::describe(c) + " is not in the vocabulary");
    }
    return static_cast<std::int32_t>(it - chars_.begin());
  }

  char32_t char_of(std::int32_t index) const {
    if (index < 0 || static_cast<std::size_t>(index) >= chars_.size()) {
      throw IndexError("vocabulary index " + std::to_string(index) + " out of range for size " +
                       std::to_string(chars_.size()));
    }
    return chars_[static_cast<std::size_t>(index)];
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<char32_t> chars_;
};

/// Next-character training pairs: N windows of T indices plus N targets.
struct SequenceSet {
  std::vector<std::int32_t> inputs;  // N * seq_len, row-major
  std::vector<std::int32_t> targets;
  std::size_t seq_len = 0;
  std::size_t vocab_size = 0;

  std::size_t size() const noexcept { return targets.size(); }
  bool empty() const noexcept { return targets.empty(); }

  std::span<const std::int32_t> window(std::size_t i) const {
    return {inputs.data() + i * seq_len, seq_len};
  }

  /// Copies the listed rows, in the given order.
  SequenceSet gather(std::span<const std::size_t> rows) const {
    SequenceSet out;
    out.seq_len = seq_len;
    out.vocab_size = vocab_size;
    out.inputs.reserve(rows.size() * seq_len);
    out.targets.reserve(rows.size());
    for (std::size_t r : rows) {
      if (r >= size()) throw IndexError("sequence row " + std::to_string(r) + " out of range");
      auto w = window(r);
      out.inputs.insert(out.inputs.end(), w.begin(), w.end());
      out.targets.push_back(targets[r]);
    }
    return out;
  }

  /// Contiguous rows [first, first + count).
  SequenceSet slice(std::size_t first, std::size_t count) const {
    std::vector<std::size_t> rows(count);
    for (std::size_t i = 0; i < count; ++i) rows[i] = first + i;
    return gather(rows);
  }
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

/// RFC-4180 style record reader: quoted fields, doubled quotes, CRLF or LF.
class CsvReader {
 public:
  explicit CsvReader(std::string_view data) : data_(data) {
    // UTF-8 byte order mark
    if (data_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
  }

  /// Reads the next record; returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    if (pos_ >= data_.size()) return false;
    ++record_;
    std::string field;
    bool quoted = false;
    bool after_quote = false;
    while (true) {
      if (pos_ >= data_.size()) {
        if (quoted) {
          throw SchemaError("CSV row " + std::to_string(record_) + ": unterminated quoted field");
        }
        fields.push_back(std::move(field));
        return true;
      }
      const char ch = data_[pos_++];
      if (quoted) {
        if (ch == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
            after_quote = true;
          }
        } else {
          field.push_back(ch);
        }
        continue;
      }
      if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
        after_quote = false;
      } else if (ch == '\n' || ch == '\r') {
        if (ch == '\r' && pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
        fields.push_back(std::move(field));
        return true;
      } else if (ch == '"') {
        if (!field.empty() || after_quote) {
          throw SchemaError("CSV row " + std::to_string(record_) + ": stray quote inside field");
        }
        quoted = true;
      } else {
        if (after_quote) {
          throw SchemaError("CSV row " + std::to_string(record_) +
                            ": characters after closing quote");
        }
        field.push_back(ch);
      }
    }
  }

  /// 1-based number of the record last returned (header is record 1).
  std::size_t record_number() const noexcept { return record_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t record_ = 0;
};

inline bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }
inline bool is_hspace(char32_t c) { return c == U' ' || c == U'\t'; }

inline std::u32string strip_citations(const std::u32string& s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == U'[') {
      std::size_t j = i + 1;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j > i + 1 && j < s.size() && s[j] == U']') {
        ++j;
        // A citation that opens a line or follows whitespace takes its trailing
        // blanks with it.
        const bool at_boundary = out.empty() || out.back() == U'\n' || is_hspace(out.back());
        if (at_boundary) {
          while (j < s.size() && is_hspace(s[j])) ++j;
        }
        i = j;
        continue;
      }
    }
    out.push_back(s[i++]);
  }
  return out;
}

inline std::u32string strip_numbering(const std::u32string& s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  bool line_start = true;
  while (i < s.size()) {
    if (line_start) {
      std::size_t j = i;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j > i && j + 1 < s.size() && (s[j] == U'.' || s[j] == U')') && s[j + 1] == U' ') {
        i = j + 2;
        continue;
      }
    }
    line_start = s[i] == U'\n';
    out.push_back(s[i++]);
  }
  return out;
}

inline std::u32string to_lower_ascii(std::u32string s) {
  for (char32_t& c : s) {
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
  }
  return s;
}

inline std::u32string collapse_ws(const std::u32string& s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t newlines = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char32_t c = s[i];
    if (c == U'\r') {
      if (i + 1 < s.size() && s[i + 1] == U'\n') continue;
      c = U'\n';
    }
    if (is_hspace(c)) {
      if (!out.empty() && out.back() == U' ') continue;
      out.push_back(U' ');
      newlines = 0;
    } else if (c == U'\n') {
      if (++newlines > 2) continue;
      out.push_back(c);
    } else {
      newlines = 0;
      out.push_back(c);
    }
  }
  return out;
}

inline std::u32string clean_once(const std::u32string& s, const CleaningRules& rules) {
  std::u32string out = s;
  if (rules.strip_bracket_citations) out = strip_citations(out);
  if (rules.strip_line_numbering) out = strip_numbering(out);
  if (rules.lowercase) out = to_lower_ascii(std::move(out));
  if (rules.collapse_whitespace) out = collapse_ws(out);
  return out;
}

}  // namespace detail

inline RawText load_plain_text(const std::filesystem::path& path) {
  RawText raw{path.string(), detail::read_file(path), Origin::plain_text};
  if (raw.text.empty()) throw DataError("empty corpus: '" + path.string() + "'");
  (void)utf8::decode(raw.text);
  return raw;
}

/// Concatenates one column of a play CSV, newline-joined, in file order.
inline RawText load_play_csv(const std::filesystem::path& path,
                             std::string_view line_column = "PlayerLine") {
  const std::string bytes = detail::read_file(path);
  (void)utf8::decode(bytes);
  detail::CsvReader reader(bytes);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("CSV '" + path.string() + "' has no header row");
  auto col = std::find(header.begin(), header.end(), line_column);
  if (col == header.end()) {
    std::string available;
    for (const auto& h : header) available += (available.empty() ? "" : ", ") + h;
    throw SchemaError("column '" + std::string(line_column) + "' not found; available columns: " +
                      available);
  }
  const auto column = static_cast<std::size_t>(col - header.begin());

  std::string text;
  std::vector<std::string> fields;
  bool first = true;
  while (reader.next(fields)) {
    // blank physical lines (usually the trailing one)
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw SchemaError("CSV row " + std::to_string(reader.record_number()) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    if (!first) text.push_back('\n');
    text += fields[column];
    first = false;
  }
  if (text.empty()) throw DataError("empty corpus: '" + path.string() + "'");
  return RawText{path.string(), std::move(text), Origin::play_csv};
}

/// Applies the enabled rules in order (citations, numbering, lowercase,
/// whitespace) until the text stops changing, which makes cleaning idempotent.
inline std::string clean(const RawText& raw, const CleaningRules& rules) {
  std::u32string cur = utf8::decode(raw.text);
  while (true) {
    std::u32string next = detail::clean_once(cur, rules);
    if (next == cur) break;
    cur = std::move(next);
  }
  if (cur.empty()) throw DataError("corpus emptied by cleaning");
  return utf8::encode(cur);
}

inline std::string clean(std::string_view text, const CleaningRules& rules) {
  return clean(RawText{"", std::string(text), Origin::plain_text}, rules);
}

/// Contiguous prefix split measured in characters: train gets floor(ratio * len).
inline CorpusSplit split(std::string_view text, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ArgumentError("split ratio must lie strictly between 0 and 1, got " +
                        std::to_string(ratio));
  }
  const std::u32string cps = utf8::decode(text);
  if (cps.size() < 10) {
    throw ArgumentError("text too short to split: " + std::to_string(cps.size()) +
                        " characters (need at least 10)");
  }
  const auto cut = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(cps.size())));
  return CorpusSplit{utf8::encode(std::u32string_view(cps).substr(0, cut)),
                     utf8::encode(std::u32string_view(cps).substr(cut)), ratio};
}

inline Vocabulary build_vocabulary(std::string_view text) {
  std::u32string cps = utf8::decode(text);
  if (cps.empty()) throw DataError("cannot build a vocabulary from empty text");
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  return Vocabulary(std::vector<char32_t>(cps.begin(), cps.end()));
}

inline std::vector<std::int32_t> encode(std::string_view text, const Vocabulary& vocab) {
  const std::u32string cps = utf8::decode(text);
  std::vector<std::int32_t> out;
  out.reserve(cps.size());
  for (std::size_t pos = 0; pos < cps.size(); ++pos) {
    if (!vocab.contains(cps[pos])) {
      throw DataError("unknown character " + utf8::describe(cps[pos]) + " at position " +
                      std::to_string(pos));
    }
    out.push_back(vocab.index_of(cps[pos]));
  }
  return out;
}

inline std::string decode(std::span<const std::int32_t> indices, const Vocabulary& vocab) {
  std::string out;
  out.reserve(indices.size());
  for (std::int32_t idx : indices) utf8::append(out, vocab.char_of(idx));
  return out;
}

/// Windows starting at 0, stride, 2*stride, ...; each paired with the next character.
inline SequenceSet encode_windows(std::string_view text, const Vocabulary& vocab,
                                  std::size_t seq_len, std::size_t stride) {
  if (seq_len == 0) throw ArgumentError("seq_len must be at least 1");
  if (stride == 0) throw ArgumentError("stride must be at least 1");
  const std::vector<std::int32_t> ids = encode(text, vocab);
  if (ids.size() <= seq_len) {
    throw DataError("text of " + std::to_string(ids.size()) +
                    " characters is too short for windows of length " + std::to_string(seq_len));
  }
  const std::size_t n = (ids.size() - seq_len - 1) / stride + 1;
  SequenceSet set;
  set.seq_len = seq_len;
  set.vocab_size = vocab.size();
  set.inputs.reserve(n * seq_len);
  set.targets.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t p = w * stride;
    set.inputs.insert(set.inputs.end(), ids.begin() + static_cast<std::ptrdiff_t>(p),
                      ids.begin() + static_cast<std::ptrdiff_t>(p + seq_len));
    set.targets.push_back(ids[p + seq_len]);
  }
  return set;
}

/// T x V matrix with a single 1 per row.
template <std::floating_point T = float>
Matrix<T> one_hot(std::span<const std::int32_t> indices, std::size_t vocab_size) {
  Matrix<T> m(indices.size(), vocab_size);
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const auto idx = indices[t];
    if (idx < 0 || static_cast<std::size_t>(idx) >= vocab_size) {
      throw IndexError("one_hot index " + std::to_string(idx) + " out of range for V=" +
                       std::to_string(vocab_size));
    }
    m(t, static_cast<std::size_t>(idx)) = T{1};
  }
  return m;
}

/// Truncates UTF-8 text to at most `max_bytes`, never splitting a character.
inline std::string truncate_utf8(std::string_view text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return std::string(text);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return std::string(text.substr(0, cut));
}

}  // namespace charforge
