#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pclreid {

/// Broad failure categories. The command-line tool maps these onto exit codes.
enum class ErrorKind {
  usage,       ///< caller violated an API precondition
  config,      ///< bad configuration value or key
  shape,       ///< dimension disagreement between operands
  format,      ///< malformed file contents
  data,        ///< well-formed input that cannot be used (empty class, all-noise clustering, ...)
  degenerate,  ///< numerically degenerate input (zero-norm vector)
  numeric,     ///< non-finite value produced during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(ErrorKind::degenerate, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// Configuration error; `key()` names the offending key (may be empty).
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorKind::config, key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Malformed binary file; `offset()` is the byte position where decoding failed.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::format, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace pclreid
