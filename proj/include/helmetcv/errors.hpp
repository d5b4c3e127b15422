#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace helmetcv {

/// Caller violated an operation's preconditions (mismatched spaces, bad sizes, bad flags).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value is outside the domain where the result is defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input text. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// An image key or resource the backend cannot resolve.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// I/O failure talking to a remote service. Safe to retry; never means "no detections".
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The remote service answered with an error status.
class RemoteError : public std::runtime_error {
 public:
  RemoteError(int status, const std::string& what)
      : std::runtime_error("HTTP " + std::to_string(status) + ": " + what), status_(status) {}

  int status() const noexcept { return status_; }
  bool is_client_error() const noexcept { return status_ >= 400 && status_ < 500; }

 private:
  int status_;
};

}  // namespace helmetcv
