#include "forge/checkpoint.hpp"

#include "forge/error.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace forge {
namespace {

constexpr std::array<char, 4> kMagic{'F', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters()) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers()) out.emplace_back(item.key(), item.value());
  return out;
}

struct Opened {
  std::ifstream in;
  nlohmann::json meta;
};

Opened open_checkpoint(const std::filesystem::path& path) {
  const auto where = path.string();
  if (!std::filesystem::exists(path)) throw IoError(IoErrorKind::MissingFile, where, "");
  Opened o{std::ifstream(path, std::ios::binary), {}};
  std::array<char, 16> head{};
  o.in.read(head.data(), head.size());
  if (o.in.gcount() != 16 || !std::equal(kMagic.begin(), kMagic.end(), head.begin()))
    throw IoError(IoErrorKind::MalformedHeader, where, "not a checkpoint");
  uint32_t version;
  uint64_t length;
  std::memcpy(&version, head.data() + 4, 4);
  std::memcpy(&length, head.data() + 8, 8);
  if (version != kVersion)
    throw IoError(IoErrorKind::MalformedHeader, where, "unsupported version");
  std::string text(length, '\0');
  o.in.read(text.data(), static_cast<std::streamsize>(length));
  if (o.in.gcount() != static_cast<std::streamsize>(length))
    throw IoError(IoErrorKind::MalformedHeader, where, "truncated metadata");
  try {
    o.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoErrorKind::MalformedHeader, where, e.what());
  }
  return o;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                     const torch::nn::Module& module) {
  const auto state = named_state(module);
  auto listing = nlohmann::json::array();
  for (const auto& [name, t] : state) listing.push_back({{"name", name}, {"shape", t.sizes().vec()}});
  meta["tensors"] = listing;
  const std::string text = meta.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "cannot open for writing");
  const uint64_t length = text.size();
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  out.write(reinterpret_cast<const char*>(&length), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : state) {
    auto payload = t.detach().to(torch::kFloat32).contiguous();
    out.write(static_cast<const char*>(payload.data_ptr()),
              static_cast<std::streamsize>(payload.numel() * 4));
  }
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "short write");
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  return open_checkpoint(path).meta;
}

void load_checkpoint_tensors(const std::filesystem::path& path, torch::nn::Module& module) {
  auto opened = open_checkpoint(path);
  const auto& listing = opened.meta.at("tensors");
  auto state = named_state(module);
  if (listing.size() != state.size())
    throw IoError(IoErrorKind::MalformedPayload, path.string(), "tensor count mismatch");
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < state.size(); ++i) {
    auto& [name, t] = state[i];
    if (listing[i].at("name").get<std::string>() != name ||
        listing[i].at("shape").get<std::vector<int64_t>>() != t.sizes().vec())
      throw IoError(IoErrorKind::MalformedPayload, path.string(), "layout mismatch at " + name);
    auto buffer = torch::empty(t.sizes(), torch::kFloat32);
    const auto bytes = static_cast<std::streamsize>(buffer.numel() * 4);
    opened.in.read(static_cast<char*>(buffer.data_ptr()), bytes);
    if (opened.in.gcount() != bytes)
      throw IoError(IoErrorKind::MalformedPayload, path.string(), "truncated tensor " + name);
    t.copy_(buffer);
  }
}

}  // namespace forge
