#pragma once

// Single-file model checkpoint: magic "FCKP", uint32 version, uint64 length of
// a JSON metadata preamble, the JSON text, then every parameter and buffer of
// the module as raw little-endian float32 in the order listed under
// meta["tensors"].

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>

namespace forge {

void save_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                     const torch::nn::Module& module);

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

/// Copies the stored tensors into `module`; names and shapes must match exactly.
void load_checkpoint_tensors(const std::filesystem::path& path, torch::nn::Module& module);

}  // namespace forge
