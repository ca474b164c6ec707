#pragma once

#include "forge/grid.hpp"
#include "forge/networks.hpp"
#include "forge/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>

namespace forge {

struct RegistrationConfig {
  int64_t patch_size = 9;
  double smoothness_weight = 1.0;
  std::vector<int64_t> encoder_channels{16, 32, 32, 32};
  std::vector<int64_t> decoder_channels{32, 32, 32, 32, 16, 16};
  double learning_rate = 1e-4;
  int64_t epochs = 500;
  int64_t batch_size = 1;
  double cc_epsilon = 1e-5;
  uint64_t seed = 0;

  /// Reduced widths for 32^3 phantoms.
  static RegistrationConfig desk_preset();
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

void to_json(nlohmann::json& j, const RegistrationConfig& c);
void from_json(const nlohmann::json& j, RegistrationConfig& c);

/// Forward models warp the atlas toward a target; reverse models warp a target
/// toward the atlas. Both take (moving, fixed) as their two input channels.
enum class RegistrationDirection { AtlasToTarget, TargetToAtlas };

struct RegistrationModel {
  Unet3d net;
  RegistrationConfig config;
  RegistrationDirection direction = RegistrationDirection::AtlasToTarget;
  LossTrace trace;  // per epoch: epoch, loss, cc, smoothness
};

/// Per-voxel squared local correlation g(a,b)^2 / (g(a,a) g(b,b) + eps) over
/// n^3 windows. g is the unnormalised centred patch covariance; windows are
/// zero padded at the border and their means use all n^3 entries. Inputs are
/// (N, 1, D, H, W) or (D, H, W); the result has the same shape.
torch::Tensor local_cc_map(const torch::Tensor& a, const torch::Tensor& b, int64_t n, double eps);

/// Sum of local_cc_map over all voxels (and batch entries). Differentiable.
torch::Tensor local_cc_loss(const torch::Tensor& a, const torch::Tensor& b, int64_t n, double eps);
double local_cc_loss(const Volume& a, const Volume& b, int64_t n = 9, double eps = 1e-5);

/// Sum over voxels of the L2 norm of all forward-difference components of the
/// field. Input (N, C, D, H, W) or (C, D, H, W). Where the norm is zero the
/// gradient is taken as zero.
torch::Tensor smoothness_loss(const torch::Tensor& field);
double smoothness_loss(const DisplacementField& field);

/// Freshly initialised model (zero output head, so it predicts the identity).
RegistrationModel make_registration_model(const RegistrationConfig& cfg,
                                          RegistrationDirection direction);

/// Minimises -L_CC + w * smoothness with Adam over `epochs` passes of the
/// unlabeled set. Deterministic for a fixed seed.
RegistrationModel train_registration(
    const Volume& atlas, std::span<const Volume> unlabeled, const RegistrationConfig& cfg,
    RegistrationDirection direction = RegistrationDirection::AtlasToTarget);

/// Network output for an explicit (moving, fixed) pair.
DisplacementField predict_field(const RegistrationModel& model, const Volume& moving,
                                const Volume& fixed);

/// S_i: warps the atlas toward `target`.
DisplacementField predict_forward_field(const RegistrationModel& model, const Volume& atlas,
                                        const Volume& target);
/// R_i: warps `target` toward the atlas. Requires a TargetToAtlas model.
DisplacementField predict_reverse_field(const RegistrationModel& reverse_model,
                                        const Volume& target, const Volume& atlas);

void save_registration_model(const RegistrationModel& model, const std::filesystem::path& path);
RegistrationModel load_registration_model(const std::filesystem::path& path);

}  // namespace forge
