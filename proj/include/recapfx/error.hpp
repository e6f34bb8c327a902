#pragma once

#include <stdexcept>
#include <string>

namespace recapfx {

/// Broad failure classes; the CLI maps each one to an exit code.
enum class ErrorKind { config, data, training };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid parameters or configuration values.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Malformed, missing or insufficient input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Model fitting failed (divergence, singular system, non-convergence).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorKind::training, what) {}
};

}  // namespace recapfx
