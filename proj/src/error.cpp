#include "forge/error.hpp"

namespace forge {

DependencyError::DependencyError(std::string required_stage, const std::string& what)
    : Error(what), required_stage_(std::move(required_stage)) {}

TrainingDivergedError::TrainingDivergedError(std::string trainer, int64_t step)
    : Error(trainer + ": loss became non-finite at step " + std::to_string(step)),
      trainer_(std::move(trainer)),
      step_(step) {}

const char* to_string(IoErrorKind kind) noexcept {
  switch (kind) {
    case IoErrorKind::MissingFile: return "missing file";
    case IoErrorKind::MalformedHeader: return "malformed header";
    case IoErrorKind::MalformedPayload: return "malformed payload";
    case IoErrorKind::DtypeMismatch: return "dtype mismatch";
    case IoErrorKind::InvalidShape: return "invalid shape";
    case IoErrorKind::WriteFailed: return "write failed";
  }
  return "unknown";
}

IoError::IoError(IoErrorKind kind, const std::string& path, const std::string& detail)
    : Error(path + ": " + to_string(kind) + (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind),
      path_(path) {}

}  // namespace forge
