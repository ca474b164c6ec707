#include "forge/manifest.hpp"

#include "forge/error.hpp"
#include "forge/seeding.hpp"

#include <fstream>
#include <iterator>

namespace forge {
namespace {

std::string hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::MissingFile, path.string(), "cannot open for hashing");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex(fnv1a64(bytes));
}

std::string hash_json(const nlohmann::json& value) { return hex(fnv1a64(value.dump())); }

void to_json(nlohmann::json& j, const StageRecord& r) {
  j = {{"config_hash", r.config_hash},
       {"seed", r.seed},
       {"inputs", r.inputs},
       {"artifacts", r.artifacts},
       {"metrics", r.metrics}};
}

void from_json(const nlohmann::json& j, StageRecord& r) {
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  r.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  r.metrics = j.value("metrics", nlohmann::json::object());
}

Manifest::Manifest(std::filesystem::path root) : root_(std::move(root)) {
  const auto path = file();
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  try {
    const auto j = nlohmann::json::parse(in);
    records_ = j.at("stages").get<std::map<std::string, StageRecord>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorKind::MalformedPayload, path.string(), e.what());
  }
}

std::optional<StageRecord> Manifest::find(const std::string& stage) const {
  auto it = records_.find(stage);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

bool Manifest::complete(const std::string& stage) const {
  auto it = records_.find(stage);
  if (it == records_.end()) return false;
  for (const auto& a : it->second.artifacts)
    if (!std::filesystem::exists(root_ / a)) return false;
  return true;
}

void Manifest::put(const std::string& stage, StageRecord record) {
  records_[stage] = std::move(record);
  save();
}

void Manifest::erase(const std::string& stage) {
  if (records_.erase(stage) > 0) save();
}

std::map<std::string, std::string> Manifest::artifact_hashes(const std::string& stage) const {
  std::map<std::string, std::string> out;
  auto it = records_.find(stage);
  if (it == records_.end()) return out;
  for (const auto& a : it->second.artifacts) out[a] = hash_file(root_ / a);
  return out;
}

void Manifest::save() const {
  std::filesystem::create_directories(root_);
  const auto path = file();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError(IoErrorKind::WriteFailed, tmp, "cannot write manifest");
    out << nlohmann::json{{"stages", records_}}.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace forge
