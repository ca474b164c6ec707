#include "forge/error.hpp"
#include "forge/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDependencyError = 3,
  kDiverged = 4,
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: one-shot atlas segmentation with learned deformation augmentation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  bool force = false;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;

  for (const auto& stage : forge::Pipeline::stages()) {
    auto* sub = app.add_subcommand(stage);
    sub->add_option("--config", config_path, "experiment configuration (JSON)")->required();
    sub->add_flag("--force", force, "recompute even when artifacts are up to date");
    sub->add_option("--seed", seed, "global seed (overrides the configuration)");
    sub->add_option("--out", out, "output root (overrides FORGE_OUT and the configuration)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  const auto stage = app.get_subcommands().front()->get_name();

  try {
    auto cfg = forge::load_experiment_config(config_path);
    if (seed) cfg.seed = *seed;
    const auto root = forge::resolve_output_root(
        cfg, out ? std::optional<std::filesystem::path>(*out) : std::nullopt);
    forge::Pipeline pipeline(cfg, root);
    const auto result = pipeline.run(stage, force);
    std::cout << stage << (result.skipped ? ": up to date" : ": done") << " (" << root.string()
              << "/" << stage << ")\n";
    if (!result.metrics.empty()) std::cout << result.metrics.dump(2) << '\n';
    if (stage == "ablate" || stage == "evaluate") {
      std::ifstream table(root / stage / "table.txt");
      std::cout << table.rdbuf();
    }
    return kOk;
  } catch (const forge::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const forge::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << " (run '" << e.required_stage()
              << "' first)\n";
    return kDependencyError;
  } catch (const forge::StaleArtifactError& e) {
    std::cerr << "stale artifacts: " << e.what() << '\n';
    return kDependencyError;
  } catch (const forge::TrainingDivergedError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
