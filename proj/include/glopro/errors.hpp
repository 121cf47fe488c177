#pragma once

#include <stdexcept>
#include <string>

namespace glopro {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside an operation's mathematical domain (e.g. retracting a
/// rotation error with norm >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch or otherwise invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Model / weights / sequence file failed validation. `field` names the
/// offending entry and `line` (1-based, 0 if not line-oriented) the input line.
class LoadError : public Error {
 public:
  LoadError(std::string field, const std::string& what, int line = 0)
      : Error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + field + ": " + what),
        field_(std::move(field)),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

 private:
  std::string field_;
  int line_ = 0;
};

class InsufficientHistoryError : public Error {
 public:
  using Error::Error;
};

class WeightsError : public Error {
 public:
  using Error::Error;
};

class FusionError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class LossError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace glopro
