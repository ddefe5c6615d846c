#pragma once

#include <stdexcept>
#include <string>

namespace spadchar {

class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Precondition on a function argument was violated.
class ArgumentError : public Error {
  public:
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

/// A configuration value breaks a documented invariant. `key()` names the offending setting.
class InvariantError : public Error {
  public:
    InvariantError(std::string key, const std::string& msg)
        : Error(key + ": " + msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

/// Malformed input text. `line()` is 1-based.
class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class InsufficientDataError : public Error {
  public:
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

class EmptyDataError : public Error {
  public:
    explicit EmptyDataError(const std::string& msg) : Error(msg) {}
};

/// An estimator was asked for a value it cannot define (e.g. a ratio with zero denominator).
class UndefinedEstimateError : public Error {
  public:
    explicit UndefinedEstimateError(const std::string& msg) : Error(msg) {}
};

class RankError : public Error {
  public:
    explicit RankError(const std::string& msg) : Error(msg) {}
};

class NonDecayingError : public Error {
  public:
    explicit NonDecayingError(const std::string& msg) : Error(msg) {}
};

} // namespace spadchar
