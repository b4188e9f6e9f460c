#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cwe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

/// Bad magic or unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File contents inconsistent with their own header.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Precondition violation on a numeric routine.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A query lemma has no candidates in the database.
class NoCandidatesError : public Error {
 public:
  using Error::Error;
};

}  // namespace cwe
