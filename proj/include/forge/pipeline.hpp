#pragma once

#include "forge/experiment_config.hpp"
#include "forge/manifest.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace forge {

/// Environment variable that overrides the configured output root.
inline constexpr const char* kOutputEnvVar = "FORGE_OUT";

struct StageResult {
  std::string stage;
  bool skipped = false;  // up to date, nothing was recomputed
  nlohmann::json metrics;
};

/// Runs the experiment stage by stage. Each stage reads upstream artifacts
/// from <root>/<upstream>/, writes its own under <root>/<stage>/ and records
/// them in <root>/manifest.json.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::filesystem::path root);

  static const std::vector<std::string>& stages();

  /// Throws DependencyError when an upstream stage has not completed and
  /// StaleArtifactError when completed artifacts were made with a different
  /// configuration (unless `force`).
  StageResult run(const std::string& stage, bool force = false);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& root() const noexcept { return root_; }
  const Manifest& manifest() const noexcept { return manifest_; }

 private:
  std::vector<std::string> dependencies(const std::string& stage) const;
  nlohmann::json stage_config(const std::string& stage) const;

  ExperimentConfig cfg_;
  std::filesystem::path root_;
  Manifest manifest_;
};

/// Output root precedence: explicit override, then the environment variable,
/// then the configuration.
std::filesystem::path resolve_output_root(const ExperimentConfig& cfg,
                                          const std::optional<std::filesystem::path>& explicit_out);

}  // namespace forge
