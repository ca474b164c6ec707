#pragma once

#include "forge/grid.hpp"
#include "forge/networks.hpp"
#include "forge/training.hpp"

#include <ATen/core/Generator.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>

namespace forge {

/// KL(N(mu, diag(exp(logvar))) || N(0, I)) summed over all entries.
torch::Tensor kl_loss(const torch::Tensor& mu, const torch::Tensor& logvar);
double kl_loss(std::span<const double> mu, std::span<const double> logvar);

struct ShapeVaeLosses {
  torch::Tensor deformation;  // sum of squares S - S_bar
  torch::Tensor image;        // sum of squares (atlas o S) - (atlas o S_bar)
  torch::Tensor kl;
  torch::Tensor total;        // (deformation + image) + beta * kl
};

/// S, S_bar: (N, 3, D, H, W); atlas: (N, 1, D, H, W) or (1, 1, D, H, W).
ShapeVaeLosses shape_vae_loss(const torch::Tensor& field, const torch::Tensor& reconstruction,
                              const torch::Tensor& atlas, const torch::Tensor& mu,
                              const torch::Tensor& logvar, double beta);

struct IntensityVaeLosses {
  torch::Tensor deformation;  // sum of squares I - I_bar
  torch::Tensor kl;
  torch::Tensor total;        // deformation + beta * kl
};

IntensityVaeLosses intensity_vae_loss(const torch::Tensor& offset,
                                      const torch::Tensor& reconstruction,
                                      const torch::Tensor& mu, const torch::Tensor& logvar,
                                      double beta);

struct VaeConfig {
  int64_t latent_dim = 512;
  double beta = 0.1;
  double sample_sigma = 10.0;
  double learning_rate = 1e-4;
  int64_t iterations = 40000;
  int64_t batch_size = 1;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int64_t group_norm_groups = 8;
  std::vector<int64_t> widths{16, 32, 64, 64};
  uint64_t seed = 0;

  static VaeConfig desk_preset();
  void validate() const;
};

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);

enum class VaeKind { Shape, Intensity };

struct TrainedVae {
  DeformationVae net;
  VaeConfig config;
  VaeKind kind = VaeKind::Shape;
  LossTrace trace;  // per iteration: iteration, total, deformation, image, kl

  GridShape grid() const { return net->arch().grid; }
};

TrainedVae make_vae(VaeKind kind, const GridShape& grid, const VaeConfig& cfg);

/// Trains on `fields` ((3, D, H, W) for shape, (D, H, W) or (1, D, H, W) for
/// intensity). The shape VAE needs the atlas for its image reconstruction term.
/// Each iteration draws `batch_size` fields uniformly with replacement.
TrainedVae train_vae(const std::vector<torch::Tensor>& fields, const std::optional<Volume>& atlas,
                     const VaeConfig& cfg, VaeKind kind);

TrainedVae train_shape_vae(std::span<const DisplacementField> fields, const Volume& atlas,
                           const VaeConfig& cfg);
TrainedVae train_intensity_vae(std::span<const IntensityField> fields, const VaeConfig& cfg);

/// Decodes z ~ N(0, sigma^2 I). Output (C, D, H, W).
torch::Tensor sample_field(const TrainedVae& vae, double sigma, at::Generator& gen);
DisplacementField sample_shape_field(const TrainedVae& vae, double sigma, at::Generator& gen);
IntensityField sample_intensity_field(const TrainedVae& vae, double sigma, at::Generator& gen);

/// Decoder output at the posterior mean of `field`.
torch::Tensor reconstruct_mean(const TrainedVae& vae, const torch::Tensor& field);

void save_vae(const TrainedVae& vae, const std::filesystem::path& path);
TrainedVae load_vae(const std::filesystem::path& path);

}  // namespace forge
