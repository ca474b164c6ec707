#pragma once

// Core 3D grid types. Each wraps a contiguous, detached torch::Tensor that is
// cloned on construction and never written afterwards, so copies are cheap
// and safe to share between threads.

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace forge {

struct GridShape {
  int64_t depth = 0;
  int64_t height = 0;
  int64_t width = 0;

  int64_t voxels() const noexcept { return depth * height * width; }
  std::vector<int64_t> sizes() const { return {depth, height, width}; }
  int64_t operator[](int axis) const { return axis == 0 ? depth : axis == 1 ? height : width; }
  std::string str() const;

  /// Spatial shape from the trailing three dimensions of `t`.
  static GridShape of(const torch::Tensor& t);

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Scalar intensity grid of shape (D, H, W) with values in [0, 1].
class Volume {
 public:
  explicit Volume(const torch::Tensor& data);

  /// Per-volume min-max rescale of arbitrary finite data to [0, 1].
  static Volume normalized(const torch::Tensor& raw);
  /// Clamps arbitrary finite data into [0, 1].
  static Volume clamped(const torch::Tensor& raw);

  const torch::Tensor& tensor() const noexcept { return data_; }
  GridShape shape() const { return GridShape::of(data_); }

 private:
  torch::Tensor data_;
};

/// Integer region ids in [0, num_classes) of shape (D, H, W); 0 is background.
class LabelMap {
 public:
  LabelMap(const torch::Tensor& labels, int64_t num_classes);

  const torch::Tensor& tensor() const noexcept { return labels_; }
  int64_t num_classes() const noexcept { return num_classes_; }
  GridShape shape() const { return GridShape::of(labels_); }
  /// Sorted distinct label values.
  std::vector<int64_t> present_labels() const;

 private:
  torch::Tensor labels_;
  int64_t num_classes_;
};

/// Per-voxel displacement in voxel units, shape (3, D, H, W). Channel c
/// displaces along spatial axis c (0 = depth, 1 = height, 2 = width).
class DisplacementField {
 public:
  explicit DisplacementField(const torch::Tensor& disp);

  static DisplacementField zeros(const GridShape& shape, torch::Dtype dtype = torch::kFloat32);
  static DisplacementField constant(const GridShape& shape, double d0, double d1, double d2,
                                    torch::Dtype dtype = torch::kFloat32);

  const torch::Tensor& tensor() const noexcept { return disp_; }
  GridShape shape() const { return GridShape::of(disp_); }

 private:
  torch::Tensor disp_;
};

/// Additive per-voxel intensity offset, shape (D, H, W).
class IntensityField {
 public:
  explicit IntensityField(const torch::Tensor& offset);

  static IntensityField zeros(const GridShape& shape, torch::Dtype dtype = torch::kFloat32);

  const torch::Tensor& tensor() const noexcept { return offset_; }
  GridShape shape() const { return GridShape::of(offset_); }

 private:
  torch::Tensor offset_;
};

/// Throws ContractError naming `what` unless the shapes are equal.
void require_same_shape(const GridShape& a, const GridShape& b, const std::string& what);

}  // namespace forge
