#pragma once

#include "forge/grid.hpp"
#include "forge/networks.hpp"
#include "forge/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>

namespace forge {

/// Binary {0,1} mask of inter-region contours in atlas space, shape (D, H, W).
class ContourMask {
 public:
  explicit ContourMask(const torch::Tensor& mask);
  const torch::Tensor& tensor() const noexcept { return mask_; }  // uint8
  int64_t count() const;

 private:
  torch::Tensor mask_;
};

/// Voxels with a 6-neighbour of a different label, dilated `dilation` times
/// with a 6-connected structuring element.
ContourMask contour_mask(const LabelMap& atlas_labels, int64_t dilation = 1);

struct IntensityLosses {
  torch::Tensor similarity;  // sum of squares of (atlas + I) o S - target
  torch::Tensor regularity;  // sum of (1 - c) * |grad I|_1
  torch::Tensor total;       // similarity + lambda * regularity
};

/// Batched tensors: atlas, offset, target (N, 1, D, H, W), field (N, 3, D, H, W),
/// mask (D, H, W) or broadcastable. All terms are differentiable.
IntensityLosses intensity_losses(const torch::Tensor& atlas, const torch::Tensor& offset,
                                 const torch::Tensor& field, const torch::Tensor& target,
                                 const torch::Tensor& mask, double lambda);

struct IntensityLossValues {
  double similarity;
  double regularity;
  double total;
};

IntensityLossValues intensity_losses(const Volume& atlas, const IntensityField& offset,
                                     const DisplacementField& field, const Volume& target,
                                     const ContourMask& mask, double lambda);

struct IntensityAlignConfig {
  double lambda = 0.02;
  std::vector<int64_t> encoder_channels{16, 32, 32, 32};
  std::vector<int64_t> decoder_channels{32, 32, 32, 32, 16, 16};
  double learning_rate = 1e-4;
  int64_t epochs = 500;
  int64_t batch_size = 1;
  int64_t contour_dilation = 1;
  uint64_t seed = 0;

  static IntensityAlignConfig desk_preset();
  void validate() const;
};

void to_json(nlohmann::json& j, const IntensityAlignConfig& c);
void from_json(const nlohmann::json& j, IntensityAlignConfig& c);

struct IntensityAlignModel {
  Unet3d net;  // (atlas, inverse-warped) -> offset
  IntensityAlignConfig config;
  LossTrace trace;  // per epoch: epoch, loss, similarity, regularity
};

IntensityAlignModel make_intensity_model(const IntensityAlignConfig& cfg);

/// Trains the alignment network with the forward fields held fixed.
IntensityAlignModel train_intensity(const Volume& atlas, std::span<const Volume> inverse_warped,
                                    std::span<const DisplacementField> forward_fields,
                                    std::span<const Volume> targets, const ContourMask& mask,
                                    const IntensityAlignConfig& cfg);

IntensityField predict_intensity(const IntensityAlignModel& model, const Volume& atlas,
                                 const Volume& inverse_warped);

void save_intensity_model(const IntensityAlignModel& model, const std::filesystem::path& path);
IntensityAlignModel load_intensity_model(const std::filesystem::path& path);

}  // namespace forge
