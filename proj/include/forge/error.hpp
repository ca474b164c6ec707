#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace forge {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments was violated (shape mismatch, bad range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or an unusable experiment setup.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was started before the stage it depends on.
class DependencyError : public Error {
 public:
  DependencyError(std::string required_stage, const std::string& what);
  const std::string& required_stage() const noexcept { return required_stage_; }

 private:
  std::string required_stage_;
};

/// Artifacts on disk were produced from a different configuration or input.
class StaleArtifactError : public Error {
 public:
  using Error::Error;
};

/// A training loop produced a non-finite loss.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(std::string trainer, int64_t step);
  const std::string& trainer() const noexcept { return trainer_; }
  int64_t step() const noexcept { return step_; }

 private:
  std::string trainer_;
  int64_t step_;
};

enum class IoErrorKind {
  MissingFile,
  MalformedHeader,
  MalformedPayload,
  DtypeMismatch,
  InvalidShape,
  WriteFailed,
};

const char* to_string(IoErrorKind kind) noexcept;

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& path, const std::string& detail);
  IoErrorKind kind() const noexcept { return kind_; }
  const std::string& path() const noexcept { return path_; }

 private:
  IoErrorKind kind_;
  std::string path_;
};

/// Throws ContractError with `message` unless `condition` holds.
inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace forge
