#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace charforge {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix or tensor dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An index (character, target, vocabulary slot) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition (ratio, length, temperature...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Corpus content problems: empty corpus, unknown characters, etc.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV or missing column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid UTF-8; carries the byte offset of the first bad sequence.
class EncodingError : public Error {
 public:
  EncodingError(const std::string& what, std::size_t byte_offset)
      : Error(what + " at byte offset " + std::to_string(byte_offset)), offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Checkpoint / corpus-cache container errors (bad magic, version, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace charforge
