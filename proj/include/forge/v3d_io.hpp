#pragma once

// "v3d" container: a 64-byte header (magic "V3D1", one dtype byte, three
// little-endian uint32 spatial dims, zero padding) followed by the raw
// little-endian payload, depth-major then height then width. Displacement
// fields store their three channels back to back.

#include "forge/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace forge {

enum class V3dDtype : uint8_t {
  Float32 = 0,
  Int32 = 1,
  Field3 = 2,  // float32, shape (3, D, H, W)
};

inline constexpr std::size_t kV3dHeaderBytes = 64;

struct V3dHeader {
  V3dDtype dtype = V3dDtype::Float32;
  GridShape shape;
};

V3dHeader read_v3d_header(const std::filesystem::path& path);

/// Raw payload as float32 (Float32, Field3) or int32 (Int32) tensor.
torch::Tensor read_v3d(const std::filesystem::path& path, V3dHeader* header = nullptr);
void write_v3d(const std::filesystem::path& path, V3dDtype dtype, const torch::Tensor& data);

void save_volume(const Volume& volume, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

void save_label_map(const LabelMap& labels, const std::filesystem::path& path);
/// When `num_classes` is absent it is inferred as max(label) + 1.
LabelMap load_label_map(const std::filesystem::path& path,
                        std::optional<int64_t> num_classes = std::nullopt);

void save_displacement_field(const DisplacementField& field, const std::filesystem::path& path);
DisplacementField load_displacement_field(const std::filesystem::path& path);

void save_intensity_field(const IntensityField& field, const std::filesystem::path& path);
IntensityField load_intensity_field(const std::filesystem::path& path);

/// Read-only NIfTI-1 (.nii, uncompressed). Returns the voxel grid as a float64
/// tensor of shape (nz, ny, nx); header fields beyond dims and datatype are ignored.
torch::Tensor read_nifti(const std::filesystem::path& path);
/// NIfTI volume min-max normalised to [0, 1].
Volume load_nifti_volume(const std::filesystem::path& path);
LabelMap load_nifti_labels(const std::filesystem::path& path,
                           std::optional<int64_t> num_classes = std::nullopt);

}  // namespace forge
