#pragma once

// Procedural "brain-like" phantoms: nested ellipsoidal shells on a background,
// each population member deformed by its own smooth random displacement, a
// smooth multiplicative and additive intensity perturbation, and voxel noise.
// The label map of a member is the canonical label map warped by the member's
// displacement, so it is exact ground truth.

#include "forge/grid.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace forge {

struct PhantomSpec {
  GridShape grid{32, 32, 32};
  int64_t num_regions = 4;  // including background
  std::vector<double> base_intensities{0.05, 0.35, 0.6, 0.85};
  double deform_amplitude = 2.5;   // peak displacement, voxels
  double deform_smoothness = 6.0;  // Gaussian kernel sigma, voxels
  double intensity_gain_amplitude = 0.15;
  double intensity_offset_amplitude = 0.08;
  double intensity_smoothness = 8.0;
  double noise_sigma = 0.02;
  uint64_t seed = 0;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

struct PhantomSubject {
  Volume image;
  LabelMap labels;
  DisplacementField deformation;  // canonical -> subject, backward convention
};

/// Undeformed, noise-free phantom.
PhantomSubject canonical_phantom(const PhantomSpec& spec);

/// Gaussian smoothing of a (C, D, H, W) tensor with border replication.
torch::Tensor gaussian_smooth(const torch::Tensor& grid, double sigma);

/// Smooth zero-mean noise with peak magnitude `amplitude`, shape (C, D, H, W).
torch::Tensor smooth_random_field(const GridShape& grid, int64_t channels, double amplitude,
                                  double smoothness, uint64_t seed);

/// One member built from independent shape and intensity seeds.
PhantomSubject generate_member(const PhantomSpec& spec, const PhantomSubject& canonical,
                               uint64_t shape_seed, uint64_t intensity_seed);

/// `count` members; member i uses seeds derived from (spec.seed, i).
std::vector<PhantomSubject> generate_population(const PhantomSpec& spec, int64_t count);

}  // namespace forge
