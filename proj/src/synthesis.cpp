#include "forge/synthesis.hpp"

#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/warp.hpp"

namespace forge {

SynthesizedSample synthesize(const Volume& atlas, const LabelMap& atlas_labels,
                             const DisplacementField& shape,
                             const std::optional<IntensityField>& intensity) {
  require_same_shape(atlas.shape(), atlas_labels.shape(), "synthesize");
  require_same_shape(atlas.shape(), shape.shape(), "synthesize");
  torch::NoGradGuard no_grad;
  auto base = atlas.tensor();
  if (intensity) {
    require_same_shape(atlas.shape(), intensity->shape(), "synthesize");
    base = base + intensity->tensor().to(base.scalar_type());
  }
  auto field = shape.tensor().to(base.scalar_type()).unsqueeze(0);
  auto image = warp_trilinear(base.unsqueeze(0).unsqueeze(0), field)[0][0];
  return {Volume::clamped(image), warp_nearest(atlas_labels, shape), {}};
}

const char* to_string(AugmentationMode mode) noexcept {
  switch (mode) {
    case AugmentationMode::RegShapeOnly: return "reg_shape_only";
    case AugmentationMode::RegShapeIntensity: return "reg_shape_intensity";
    case AugmentationMode::VaeShapeOnly: return "vae_shape_only";
    case AugmentationMode::VaeShapeIntensity: return "vae_shape_intensity";
  }
  return "unknown";
}

AugmentationMode augmentation_mode_from(const std::string& name) {
  for (auto m : {AugmentationMode::RegShapeOnly, AugmentationMode::RegShapeIntensity,
                 AugmentationMode::VaeShapeOnly, AugmentationMode::VaeShapeIntensity})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown augmentation mode '" + name + "'");
}

bool uses_intensity(AugmentationMode mode) noexcept {
  return mode == AugmentationMode::RegShapeIntensity || mode == AugmentationMode::VaeShapeIntensity;
}

bool uses_vae(AugmentationMode mode) noexcept {
  return mode == AugmentationMode::VaeShapeOnly || mode == AugmentationMode::VaeShapeIntensity;
}

SampleStream::SampleStream(AugmentationMode mode, std::shared_ptr<const SampleSources> sources,
                           uint64_t seed)
    : mode_(mode), sources_(std::move(sources)), seed_(seed), gen_(make_generator(seed)) {
  if (!sources_) throw ConfigError("SampleStream: no sources");
  const auto& s = *sources_;
  require_same_shape(s.atlas.shape(), s.atlas_labels.shape(), "SampleStream");
  if (uses_vae(mode_)) {
    if (!s.shape_vae || s.shape_vae->kind != VaeKind::Shape)
      throw ConfigError(std::string(to_string(mode_)) + ": needs a trained shape VAE");
    if (uses_intensity(mode_) && (!s.intensity_vae || s.intensity_vae->kind != VaeKind::Intensity))
      throw ConfigError(std::string(to_string(mode_)) + ": needs a trained intensity VAE");
  } else {
    if (s.shape_fields.empty())
      throw ConfigError(std::string(to_string(mode_)) + ": no registration shape fields");
    if (uses_intensity(mode_) && s.intensity_fields.empty())
      throw ConfigError(std::string(to_string(mode_)) + ": no registration intensity fields");
  }
}

SynthesizedSample SampleStream::next() {
  const auto& s = *sources_;
  Provenance prov{"", uses_intensity(mode_) ? "" : "none", seed_, draws_++};

  if (s.include_identity) {
    const auto pool = std::max<int64_t>(1, static_cast<int64_t>(s.shape_fields.size()));
    if (uniform_index(gen_, pool + 1) == pool) {
      auto sample = synthesize(s.atlas, s.atlas_labels, DisplacementField::zeros(s.atlas.shape()));
      prov.shape_source = "identity";
      if (uses_intensity(mode_)) prov.intensity_source = "identity";
      sample.provenance = prov;
      return sample;
    }
  }

  std::optional<DisplacementField> shape;
  std::optional<IntensityField> intensity;
  if (uses_vae(mode_)) {
    shape = sample_shape_field(*s.shape_vae, s.sample_sigma, gen_);
    prov.shape_source = "vae";
    if (uses_intensity(mode_)) {
      intensity = sample_intensity_field(*s.intensity_vae, s.sample_sigma, gen_);
      prov.intensity_source = "vae";
    }
  } else {
    const auto i = uniform_index(gen_, static_cast<int64_t>(s.shape_fields.size()));
    shape = s.shape_fields[static_cast<std::size_t>(i)];
    prov.shape_source = "reg:" + std::to_string(i);
    if (uses_intensity(mode_)) {
      const auto j = uniform_index(gen_, static_cast<int64_t>(s.intensity_fields.size()));
      intensity = s.intensity_fields[static_cast<std::size_t>(j)];
      prov.intensity_source = "reg:" + std::to_string(j);
    }
  }
  auto sample = synthesize(s.atlas, s.atlas_labels, *shape, intensity);
  sample.provenance = prov;
  return sample;
}

}  // namespace forge
