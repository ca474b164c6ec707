#pragma once

#include "forge/deformation_vae.hpp"
#include "forge/grid.hpp"

#include <ATen/core/Generator.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace forge {

struct Provenance {
  std::string shape_source;      // "identity", "reg:<i>" or "vae"
  std::string intensity_source;  // "none", "identity", "reg:<i>" or "vae"
  uint64_t stream_seed = 0;
  int64_t draw_index = 0;
};

struct SynthesizedSample {
  Volume image;     // (atlas + I) o S, clamped to [0, 1]
  LabelMap labels;  // atlas labels o S, nearest neighbour
  Provenance provenance;
};

/// Applies one shape deformation (and optional intensity offset) to the atlas.
SynthesizedSample synthesize(const Volume& atlas, const LabelMap& atlas_labels,
                             const DisplacementField& shape,
                             const std::optional<IntensityField>& intensity = std::nullopt);

enum class AugmentationMode { RegShapeOnly, RegShapeIntensity, VaeShapeOnly, VaeShapeIntensity };

const char* to_string(AugmentationMode mode) noexcept;
AugmentationMode augmentation_mode_from(const std::string& name);
bool uses_intensity(AugmentationMode mode) noexcept;
bool uses_vae(AugmentationMode mode) noexcept;

/// Everything a stream may draw from. Registration fields are stored in atlas
/// space; VAEs are shared read-only.
struct SampleSources {
  Volume atlas;
  LabelMap atlas_labels;
  std::vector<DisplacementField> shape_fields;
  std::vector<IntensityField> intensity_fields;
  std::shared_ptr<const TrainedVae> shape_vae;
  std::shared_ptr<const TrainedVae> intensity_vae;
  double sample_sigma = 10.0;
  /// When set, each draw is the untouched atlas with probability 1 / (N + 1),
  /// where N is the number of registration shape fields (at least 1).
  bool include_identity = true;
};

/// Something that yields training samples one at a time.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual SynthesizedSample next() = 0;
};

/// Infinite on-the-fly stream of synthesized samples; single consumer.
/// Identical (mode, sources, seed) give identical sequences.
class SampleStream final : public SampleSource {
 public:
  SampleStream(AugmentationMode mode, std::shared_ptr<const SampleSources> sources, uint64_t seed);

  SynthesizedSample next() override;
  AugmentationMode mode() const noexcept { return mode_; }

 private:
  AugmentationMode mode_;
  std::shared_ptr<const SampleSources> sources_;
  uint64_t seed_;
  at::Generator gen_;
  int64_t draws_ = 0;
};

/// Always returns the same sample.
class ConstantSource final : public SampleSource {
 public:
  explicit ConstantSource(SynthesizedSample sample) : sample_(std::move(sample)) {}
  SynthesizedSample next() override { return sample_; }

 private:
  SynthesizedSample sample_;
};

}  // namespace forge
