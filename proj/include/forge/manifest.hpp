#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge {

/// Hex FNV-1a 64 digest of a file's bytes / of compact JSON text.
std::string hash_file(const std::filesystem::path& path);
std::string hash_json(const nlohmann::json& value);

struct StageRecord {
  std::string config_hash;
  uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path relative to the output root -> hash
  std::vector<std::string> artifacts;         // paths relative to the output root
  nlohmann::json metrics = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const StageRecord& r);
void from_json(const nlohmann::json& j, StageRecord& r);

/// Stage records kept in <root>/manifest.json.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path file() const { return root_ / "manifest.json"; }

  std::optional<StageRecord> find(const std::string& stage) const;
  /// True when the record exists and every artifact it lists is on disk.
  bool complete(const std::string& stage) const;
  void put(const std::string& stage, StageRecord record);
  void erase(const std::string& stage);
  const std::map<std::string, StageRecord>& records() const noexcept { return records_; }

  /// Hashes of every artifact of `stage`, keyed by relative path.
  std::map<std::string, std::string> artifact_hashes(const std::string& stage) const;

 private:
  void save() const;

  std::filesystem::path root_;
  std::map<std::string, StageRecord> records_;
};

}  // namespace forge
