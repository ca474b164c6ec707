#pragma once

#include "forge/grid.hpp"
#include "forge/networks.hpp"
#include "forge/synthesis.hpp"
#include "forge/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace forge {

/// Cross-entropy averaged over pixels: logits (K, H, W) with target (H, W), or
/// batched logits (B, K, H, W) with targets (B, H, W) averaged over B as well.
torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& target);

struct SegmentationConfig {
  int64_t num_classes = 4;
  int64_t slice_axis = 2;
  int64_t batch_size = 16;
  int64_t iterations = 40000;
  double learning_rate = 1e-4;
  std::vector<int64_t> encoder_channels{16, 32, 32, 64, 64};
  std::vector<int64_t> decoder_channels{64, 32, 32, 16, 16};
  uint64_t seed = 0;

  static SegmentationConfig desk_preset();
  void validate() const;
};

void to_json(nlohmann::json& j, const SegmentationConfig& c);
void from_json(const nlohmann::json& j, SegmentationConfig& c);

struct SegmentationModel {
  Unet2d net;
  SegmentationConfig config;
  LossTrace trace;  // per iteration: iteration, loss
};

SegmentationModel make_segmentation_model(const SegmentationConfig& cfg);

/// Each iteration takes one sample from `source` and trains on `batch_size`
/// distinct random slices of it along `slice_axis` (all slices when fewer).
SegmentationModel train_segmentation(SampleSource& source, const SegmentationConfig& cfg);

/// Slice-wise argmax prediction, re-stacked along the model's slice axis.
LabelMap segment_volume(const SegmentationModel& model, const Volume& volume);

void save_segmentation_model(const SegmentationModel& model, const std::filesystem::path& path);
SegmentationModel load_segmentation_model(const std::filesystem::path& path);

}  // namespace forge
