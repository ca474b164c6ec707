#pragma once

#include "forge/deformation_vae.hpp"
#include "forge/evaluation.hpp"
#include "forge/intensity_alignment.hpp"
#include "forge/phantom.hpp"
#include "forge/registration.hpp"
#include "forge/segmentation.hpp"
#include "forge/synthesis.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace forge {

enum class DataSource { Phantom, Directory };

struct DataConfig {
  DataSource source = DataSource::Phantom;
  PhantomSpec phantom;
  int64_t num_unlabeled = 10;
  int64_t num_test = 5;
  /// Directory source: <dir>/atlas/{image,labels}, <dir>/unlabeled/*, and
  /// <dir>/test/<name>_image + <name>_labels, each .v3d or .nii.
  std::filesystem::path directory;
  int64_t num_classes = 4;
};

struct SynthesisConfig {
  AugmentationMode mode = AugmentationMode::VaeShapeIntensity;
  double sample_sigma = 10.0;
  bool include_identity = true;
  int64_t num_samples = 8;  // written to disk by the synthesize stage
};

struct EvaluationConfig {
  RegionMerge merge;
};

struct AblationConfig {
  std::vector<AugmentationMode> modes{AugmentationMode::RegShapeOnly,
                                      AugmentationMode::VaeShapeOnly,
                                      AugmentationMode::RegShapeIntensity,
                                      AugmentationMode::VaeShapeIntensity};
};

struct ExperimentConfig {
  std::string preset = "desk";
  uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  DataConfig data;
  RegistrationConfig registration;
  IntensityAlignConfig intensity;
  VaeConfig shape_vae;
  VaeConfig intensity_vae;
  SynthesisConfig synthesis;
  SegmentationConfig segmentation;
  EvaluationConfig evaluation;
  AblationConfig ablation;

  /// Small widths and short schedules for 32^3 phantoms on a CPU.
  static ExperimentConfig desk();
  /// Full-size schedules and widths for real volumes.
  static ExperimentConfig paper();
  static ExperimentConfig named_preset(const std::string& name);

  int64_t num_classes() const;
  void validate() const;
};

/// Seed for a stage or module, derived from the global seed and its name.
uint64_t stage_seed(uint64_t global_seed, const std::string& stage);

/// Starts from the preset named by the "preset" key (default "desk") and
/// overlays the remaining keys. Unknown keys and ill-typed values are
/// configuration errors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

}  // namespace forge
