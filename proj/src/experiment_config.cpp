#include "forge/experiment_config.hpp"

#include "forge/error.hpp"
#include "forge/seeding.hpp"

#include <fstream>

namespace forge {
namespace {

using nlohmann::json;

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

/// Every key in `user` must exist in `reference` with a compatible type.
/// Objects listed in `free_form` accept arbitrary keys.
void check_schema(const json& user, const json& reference, const std::string& where) {
  static const std::vector<std::string> free_form{"/evaluation/merge"};
  if (!user.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const auto path = where + "/" + key;
    if (!reference.contains(key)) throw ConfigError("unknown configuration key " + path);
    const auto& ref = reference.at(key);
    if (!same_kind(value, ref) && !(ref.is_array() && value.is_array()))
      throw ConfigError("configuration key " + path + " has type " + value.type_name() +
                        ", expected " + ref.type_name());
    if (value.is_object() &&
        std::find(free_form.begin(), free_form.end(), path) == free_form.end())
      check_schema(value, ref, path);
  }
}

json synthesis_json(const SynthesisConfig& s) {
  return {{"mode", to_string(s.mode)},
          {"sample_sigma", s.sample_sigma},
          {"include_identity", s.include_identity},
          {"num_samples", s.num_samples}};
}

}  // namespace

uint64_t stage_seed(uint64_t global_seed, const std::string& stage) {
  return derive_seed(global_seed, stage);
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.preset = "desk";
  c.output_dir = "runs/desk";
  c.data.phantom.intensity_gain_amplitude = 0.08;
  c.data.phantom.intensity_offset_amplitude = 0.04;
  // The smoothness term is a sum over voxels; at 32^3 a unit weight keeps the
  // fields near zero, so the desk runs weight it down.
  c.registration = RegistrationConfig::desk_preset();
  c.registration.decoder_channels = {16, 16, 16, 16};
  c.registration.epochs = 30;
  c.registration.learning_rate = 3e-3;
  c.registration.smoothness_weight = 0.05;
  c.intensity = IntensityAlignConfig::desk_preset();
  c.intensity.decoder_channels = {16, 16, 16, 16};
  c.intensity.epochs = 40;
  c.intensity.learning_rate = 1e-3;
  c.shape_vae = VaeConfig::desk_preset();
  c.intensity_vae = VaeConfig::desk_preset();
  c.segmentation = SegmentationConfig::desk_preset();
  c.segmentation.learning_rate = 2e-3;
  return c;
}

ExperimentConfig ExperimentConfig::paper() {
  ExperimentConfig c;
  c.preset = "paper";
  c.output_dir = "runs/paper";
  c.data.source = DataSource::Directory;
  c.data.num_unlabeled = 82;
  c.data.num_test = 20;
  c.data.num_classes = 29;
  c.data.phantom.grid = {160, 160, 128};
  c.segmentation.num_classes = 29;
  return c;
}

ExperimentConfig ExperimentConfig::named_preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

int64_t ExperimentConfig::num_classes() const {
  return data.source == DataSource::Phantom ? data.phantom.num_regions : data.num_classes;
}

void ExperimentConfig::validate() const {
  if (data.source == DataSource::Phantom) {
    data.phantom.validate();
    if (data.num_unlabeled < 1) throw ConfigError("data.num_unlabeled must be >= 1");
    if (data.num_test < 1) throw ConfigError("data.num_test must be >= 1");
  } else if (data.directory.empty()) {
    throw ConfigError("data.directory is required for the directory source");
  }
  if (num_classes() < 2) throw ConfigError("at least two classes are required");
  if (segmentation.num_classes != num_classes())
    throw ConfigError("segmentation.num_classes must equal the number of label classes");
  registration.validate();
  intensity.validate();
  shape_vae.validate();
  intensity_vae.validate();
  segmentation.validate();
  if (!(synthesis.sample_sigma >= 0.0)) throw ConfigError("synthesis.sample_sigma must be >= 0");
  if (synthesis.num_samples < 0) throw ConfigError("synthesis.num_samples must be >= 0");
  if (ablation.modes.empty()) throw ConfigError("ablation.modes must not be empty");
  for (const auto& [from, to] : evaluation.merge)
    if (from <= 0 || to <= 0) throw ConfigError("evaluation.merge may not involve background");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  json merge = json::object();
  for (const auto& [from, to] : c.evaluation.merge) merge[std::to_string(from)] = to;
  json modes = json::array();
  for (auto m : c.ablation.modes) modes.push_back(to_string(m));
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"data",
       {{"source", c.data.source == DataSource::Phantom ? "phantom" : "directory"},
        {"phantom", c.data.phantom},
        {"num_unlabeled", c.data.num_unlabeled},
        {"num_test", c.data.num_test},
        {"directory", c.data.directory.string()},
        {"num_classes", c.data.num_classes}}},
      {"registration", c.registration},
      {"intensity", c.intensity},
      {"shape_vae", c.shape_vae},
      {"intensity_vae", c.intensity_vae},
      {"synthesis", synthesis_json(c.synthesis)},
      {"segmentation", c.segmentation},
      {"evaluation", {{"merge", merge}}},
      {"ablation", {{"modes", modes}}},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& user) {
  if (!user.is_object()) throw ConfigError("configuration must be a JSON object");
  try {
    const auto preset_name = user.value("preset", std::string("desk"));
    auto merged = to_json(ExperimentConfig::named_preset(preset_name));
    check_schema(user, merged, "");
    merged.merge_patch(user);

    ExperimentConfig c = ExperimentConfig::named_preset(preset_name);
    c.seed = merged.at("seed").get<uint64_t>();
    c.output_dir = merged.at("output_dir").get<std::string>();

    const auto& d = merged.at("data");
    const auto source = d.at("source").get<std::string>();
    if (source == "phantom") c.data.source = DataSource::Phantom;
    else if (source == "directory") c.data.source = DataSource::Directory;
    else throw ConfigError("data.source must be 'phantom' or 'directory'");
    c.data.phantom = d.at("phantom").get<PhantomSpec>();
    c.data.num_unlabeled = d.at("num_unlabeled").get<int64_t>();
    c.data.num_test = d.at("num_test").get<int64_t>();
    c.data.directory = d.at("directory").get<std::string>();
    c.data.num_classes = d.at("num_classes").get<int64_t>();

    c.registration = merged.at("registration").get<RegistrationConfig>();
    c.intensity = merged.at("intensity").get<IntensityAlignConfig>();
    c.shape_vae = merged.at("shape_vae").get<VaeConfig>();
    c.intensity_vae = merged.at("intensity_vae").get<VaeConfig>();
    c.segmentation = merged.at("segmentation").get<SegmentationConfig>();

    const auto& s = merged.at("synthesis");
    c.synthesis.mode = augmentation_mode_from(s.at("mode").get<std::string>());
    c.synthesis.sample_sigma = s.at("sample_sigma").get<double>();
    c.synthesis.include_identity = s.at("include_identity").get<bool>();
    c.synthesis.num_samples = s.at("num_samples").get<int64_t>();

    c.evaluation.merge.clear();
    for (const auto& [from, to] : merged.at("evaluation").at("merge").items())
      c.evaluation.merge[std::stoll(from)] = to.get<int64_t>();
    c.ablation.modes.clear();
    for (const auto& m : merged.at("ablation").at("modes"))
      c.ablation.modes.push_back(augmentation_mode_from(m.get<std::string>()));

    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("configuration file " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace forge
