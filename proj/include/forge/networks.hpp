#pragma once

#include "forge/grid.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <utility>
#include <vector>

namespace forge {

// ---------------------------------------------------------------------------
// 3D U-Net used by the registration and intensity-alignment networks.
//
// Encoder: stride-2 3x3x3 convolutions. Decoder: the first `encoder.size()`
// entries run at decreasing depth with nearest upsampling and skip
// concatenation; any remaining entries run at full resolution after the input
// is concatenated back in. The output head is zero-initialised so a fresh
// network predicts exactly zero.
// ---------------------------------------------------------------------------
struct Unet3dArch {
  int64_t in_channels = 2;
  int64_t out_channels = 3;
  std::vector<int64_t> encoder{16, 32, 32, 32};
  std::vector<int64_t> decoder{32, 32, 32, 32, 16, 16};
};

void to_json(nlohmann::json& j, const Unet3dArch& a);
void from_json(const nlohmann::json& j, Unet3dArch& a);

class Unet3dImpl : public torch::nn::Module {
 public:
  explicit Unet3dImpl(Unet3dArch arch);
  torch::Tensor forward(const torch::Tensor& x);
  const Unet3dArch& arch() const noexcept { return arch_; }

 private:
  Unet3dArch arch_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList decoder_;
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(Unet3d);

// ---------------------------------------------------------------------------
// 3D VAE over deformation grids. Encoder blocks are stride-2 conv + group norm
// + LeakyReLU; the flattened features feed two linear heads (mean, log
// variance). The decoder mirrors it with nearest upsampling, conv, group norm
// and ReLU, ending in a linear conv to the field channels.
// ---------------------------------------------------------------------------
struct VaeArch {
  int64_t channels = 3;
  GridShape grid{32, 32, 32};
  std::vector<int64_t> widths{16, 32, 64, 64};
  int64_t latent_dim = 512;
  int64_t groups = 8;
};

void to_json(nlohmann::json& j, const VaeArch& a);
void from_json(const nlohmann::json& j, VaeArch& a);

struct VaeForward {
  torch::Tensor reconstruction;
  torch::Tensor mu;
  torch::Tensor logvar;
};

class DeformationVaeImpl : public torch::nn::Module {
 public:
  explicit DeformationVaeImpl(VaeArch arch);

  std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& x);
  torch::Tensor decode(const torch::Tensor& z);
  /// Encode, draw z = mu + exp(logvar / 2) * eps with eps from `gen`, decode.
  VaeForward forward(const torch::Tensor& x, at::Generator& gen);

  const VaeArch& arch() const noexcept { return arch_; }

 private:
  VaeArch arch_;
  std::vector<std::vector<int64_t>> level_sizes_;  // spatial size per level, level 0 = input
  torch::nn::Sequential encoder_;
  torch::nn::Linear mu_head_{nullptr};
  torch::nn::Linear logvar_head_{nullptr};
  torch::nn::Linear expand_{nullptr};
  torch::nn::ModuleList decoder_convs_;
  torch::nn::ModuleList decoder_norms_;
  torch::nn::Conv3d head_{nullptr};
};
TORCH_MODULE(DeformationVae);

// ---------------------------------------------------------------------------
// 2D U-Net for slice-wise segmentation: five encoder levels (3x3 conv +
// LeakyReLU, 2x2 max-pooling between levels) and five decoder layers (x2
// nearest upsampling + skip concatenation), then a 1x1 K-class head.
// ---------------------------------------------------------------------------
struct Unet2dArch {
  int64_t in_channels = 1;
  int64_t num_classes = 4;
  std::vector<int64_t> encoder{16, 32, 32, 64, 64};
  std::vector<int64_t> decoder{64, 32, 32, 16, 16};
};

void to_json(nlohmann::json& j, const Unet2dArch& a);
void from_json(const nlohmann::json& j, Unet2dArch& a);

class Unet2dImpl : public torch::nn::Module {
 public:
  explicit Unet2dImpl(Unet2dArch arch);
  /// (B, in_channels, H, W) -> logits (B, num_classes, H, W).
  torch::Tensor forward(const torch::Tensor& x);
  const Unet2dArch& arch() const noexcept { return arch_; }
  torch::nn::Conv2d& head() noexcept { return head_; }

 private:
  Unet2dArch arch_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList decoder_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Unet2d);

/// Number of trainable scalars.
int64_t parameter_count(const torch::nn::Module& module);

}  // namespace forge
