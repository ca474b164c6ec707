#include "forge/pipeline.hpp"

#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/v3d_io.hpp"
#include "forge/warp.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

namespace forge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string indexed(const std::string& prefix, std::size_t i, const std::string& suffix = ".v3d") {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return prefix + buf + suffix;
}

/// Collects the files a stage writes, as paths relative to the output root.
class StageWriter {
 public:
  StageWriter(fs::path root, const std::string& stage) : root_(std::move(root)), stage_(stage) {
    fs::create_directories(root_ / stage_);
  }

  fs::path path(const std::string& name) {
    const auto rel = (fs::path(stage_) / name).generic_string();
    artifacts_.push_back(rel);
    const auto full = root_ / rel;
    fs::create_directories(full.parent_path());
    return full;
  }

  void text(const std::string& name, const std::string& content) {
    std::ofstream out(path(name));
    out << content;
    if (!out) throw IoError(IoErrorKind::WriteFailed, (root_ / stage_ / name).string(), "write failed");
  }

  void json_file(const std::string& name, const json& content) { text(name, content.dump(2) + "\n"); }

  std::vector<std::string> artifacts() const { return artifacts_; }

 private:
  fs::path root_;
  std::string stage_;
  std::vector<std::string> artifacts_;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::MissingFile, path.string(), "cannot open");
  return json::parse(in);
}

// ---------------------------------------------------------------------------
// Data ingestion

bool has_ext(const fs::path& p, const std::string& ext) { return p.extension() == ext; }

Volume load_any_volume(const fs::path& p) {
  if (has_ext(p, ".nii")) return load_nifti_volume(p);
  return Volume::normalized(read_v3d(p));
}

LabelMap load_any_labels(const fs::path& p, int64_t k) {
  if (has_ext(p, ".nii")) return load_nifti_labels(p, k);
  return load_label_map(p, k);
}

fs::path find_one(const fs::path& dir, const std::string& stem) {
  for (const auto* ext : {".v3d", ".nii"})
    if (fs::exists(dir / (stem + ext))) return dir / (stem + ext);
  throw ConfigError("missing " + (dir / stem).string() + ".{v3d,nii}");
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw ConfigError("missing directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && (has_ext(e.path(), ".v3d") || has_ext(e.path(), ".nii")))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct Dataset {
  Volume atlas;
  LabelMap atlas_labels;
  std::vector<Volume> unlabeled;
  std::vector<Volume> test_images;
  std::vector<LabelMap> test_labels;
};

Dataset load_dataset(const fs::path& root, int64_t k) {
  const auto dir = root / "gen-data";
  const auto meta = read_json(dir / "population.json");
  Dataset d{load_volume(dir / "atlas" / "image.v3d"),
            load_label_map(dir / "atlas" / "labels.v3d", k), {}, {}, {}};
  for (int64_t i = 0; i < meta.at("num_unlabeled").get<int64_t>(); ++i)
    d.unlabeled.push_back(load_volume(dir / "unlabeled" / indexed("u", i)));
  for (int64_t i = 0; i < meta.at("num_test").get<int64_t>(); ++i) {
    d.test_images.push_back(load_volume(dir / "test" / indexed("t", i, "_image.v3d")));
    d.test_labels.push_back(load_label_map(dir / "test" / indexed("t", i, "_labels.v3d"), k));
  }
  return d;
}

template <class T, class Loader>
std::vector<T> load_series(const fs::path& dir, const std::string& prefix, std::size_t count,
                           Loader load) {
  std::vector<T> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(load(dir / indexed(prefix, i)));
  return out;
}

// ---------------------------------------------------------------------------
// Stage bodies

struct StageContext {
  const ExperimentConfig& cfg;
  fs::path root;
  uint64_t seed;  // stage seed
  StageWriter& out;
  json& metrics;
};

void gen_data(StageContext& c) {
  const auto k = c.cfg.num_classes();
  json population;
  std::vector<Volume> unlabeled, test_images;
  std::vector<LabelMap> test_labels;
  std::optional<Volume> atlas;
  std::optional<LabelMap> atlas_labels;

  if (c.cfg.data.source == DataSource::Phantom) {
    auto spec = c.cfg.data.phantom;
    spec.seed = c.seed;
    const auto n = c.cfg.data.num_unlabeled;
    const auto t = c.cfg.data.num_test;
    auto members = generate_population(spec, 1 + n + t);
    atlas = members[0].image;
    atlas_labels = members[0].labels;
    for (int64_t i = 0; i < n; ++i) unlabeled.push_back(members[1 + i].image);
    for (int64_t i = 0; i < t; ++i) {
      test_images.push_back(members[1 + n + i].image);
      test_labels.push_back(members[1 + n + i].labels);
    }
    std::vector<int64_t> u_ids(n), t_ids(t);
    for (int64_t i = 0; i < n; ++i) u_ids[i] = 1 + i;
    for (int64_t i = 0; i < t; ++i) t_ids[i] = 1 + n + i;
    population = {{"source", "phantom"},
                  {"spec", spec},
                  {"seed", spec.seed},
                  {"split", {{"atlas", 0}, {"unlabeled", u_ids}, {"test", t_ids}}}};
  } else {
    const auto& dir = c.cfg.data.directory;
    atlas = load_any_volume(find_one(dir / "atlas", "image"));
    atlas_labels = load_any_labels(find_one(dir / "atlas", "labels"), k);
    std::vector<std::string> u_names, t_names;
    for (const auto& p : list_volumes(dir / "unlabeled")) {
      unlabeled.push_back(load_any_volume(p));
      u_names.push_back(p.filename().string());
    }
    for (const auto& p : list_volumes(dir / "test")) {
      const auto stem = p.stem().string();
      if (stem.size() < 6 || stem.substr(stem.size() - 6) != "_image") continue;
      const auto base = stem.substr(0, stem.size() - 6);
      test_images.push_back(load_any_volume(p));
      test_labels.push_back(load_any_labels(find_one(dir / "test", base + "_labels"), k));
      t_names.push_back(base);
    }
    if (unlabeled.empty() || test_images.empty())
      throw ConfigError("data directory needs at least one unlabeled and one test volume");
    population = {{"source", "directory"},
                  {"directory", dir.string()},
                  {"split", {{"unlabeled", u_names}, {"test", t_names}}}};
  }
  for (const auto& v : unlabeled) require_same_shape(atlas->shape(), v.shape(), "gen-data");
  for (const auto& v : test_images) require_same_shape(atlas->shape(), v.shape(), "gen-data");

  save_volume(*atlas, c.out.path("atlas/image.v3d"));
  save_label_map(*atlas_labels, c.out.path("atlas/labels.v3d"));
  for (std::size_t i = 0; i < unlabeled.size(); ++i)
    save_volume(unlabeled[i], c.out.path("unlabeled/" + indexed("u", i)));
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    save_volume(test_images[i], c.out.path("test/" + indexed("t", i, "_image.v3d")));
    save_label_map(test_labels[i], c.out.path("test/" + indexed("t", i, "_labels.v3d")));
  }
  population["num_unlabeled"] = unlabeled.size();
  population["num_test"] = test_images.size();
  population["num_classes"] = k;
  population["grid"] = atlas->shape().sizes();
  c.out.json_file("population.json", population);
  c.metrics = {{"num_unlabeled", unlabeled.size()}, {"num_test", test_images.size()}};
}

void register_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  auto fwd_cfg = c.cfg.registration;
  fwd_cfg.seed = derive_seed(c.seed, "forward");
  auto rev_cfg = c.cfg.registration;
  rev_cfg.seed = derive_seed(c.seed, "reverse");

  const auto fwd = train_registration(data.atlas, data.unlabeled, fwd_cfg,
                                      RegistrationDirection::AtlasToTarget);
  const auto rev = train_registration(data.atlas, data.unlabeled, rev_cfg,
                                      RegistrationDirection::TargetToAtlas);
  save_registration_model(fwd, c.out.path("forward.ckpt"));
  save_registration_model(rev, c.out.path("reverse.ckpt"));
  fwd.trace.write_csv(c.out.path("forward_trace.csv"));
  rev.trace.write_csv(c.out.path("reverse_trace.csv"));

  const auto n = static_cast<int64_t>(fwd_cfg.patch_size);
  double cc_before = 0.0, cc_after = 0.0;
  for (std::size_t i = 0; i < data.unlabeled.size(); ++i) {
    const auto& u = data.unlabeled[i];
    const auto s = predict_forward_field(fwd, data.atlas, u);
    const auto r = predict_reverse_field(rev, u, data.atlas);
    save_displacement_field(s, c.out.path("shape/" + indexed("S", i)));
    save_displacement_field(r, c.out.path("reverse/" + indexed("R", i)));
    save_volume(warp_trilinear(u, r), c.out.path("inverse_warped/" + indexed("x", i)));
    cc_before += local_cc_loss(data.atlas, u, n, fwd_cfg.cc_epsilon);
    cc_after += local_cc_loss(warp_trilinear(data.atlas, s), u, n, fwd_cfg.cc_epsilon);
  }
  for (std::size_t j = 0; j < data.test_images.size(); ++j)
    save_displacement_field(predict_forward_field(fwd, data.atlas, data.test_images[j]),
                            c.out.path("test_fields/" + indexed("T", j)));
  const auto count = static_cast<double>(data.unlabeled.size());
  c.metrics = {{"cc_before", cc_before / count}, {"cc_after", cc_after / count}};
  if (!fwd.trace.empty()) c.metrics["forward_final_loss"] = fwd.trace.tail_mean("loss", 1);
  if (!rev.trace.empty()) c.metrics["reverse_final_loss"] = rev.trace.tail_mean("loss", 1);
}

void align_intensity(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto n = data.unlabeled.size();
  const auto reg = c.root / "register";
  const auto shapes = load_series<DisplacementField>(reg / "shape", "S", n, load_displacement_field);
  const auto warped = load_series<Volume>(reg / "inverse_warped", "x", n, load_volume);

  auto cfg = c.cfg.intensity;
  cfg.seed = c.seed;
  const auto mask = contour_mask(data.atlas_labels, cfg.contour_dilation);
  const auto model = train_intensity(data.atlas, warped, shapes, data.unlabeled, mask, cfg);
  save_intensity_model(model, c.out.path("model.ckpt"));
  model.trace.write_csv(c.out.path("trace.csv"));
  save_label_map(LabelMap(mask.tensor().to(torch::kInt64), 2), c.out.path("contour.v3d"));

  double mean_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto field = predict_intensity(model, data.atlas, warped[i]);
    save_intensity_field(field, c.out.path("intensity/" + indexed("I", i)));
    mean_abs += field.tensor().abs().mean().item<double>();
  }
  c.metrics = {{"mean_abs_offset", mean_abs / static_cast<double>(n)},
               {"contour_voxels", mask.count()}};
  if (!model.trace.empty()) c.metrics["final_loss"] = model.trace.tail_mean("loss", 1);
}

void train_shape_vae_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto shapes = load_series<DisplacementField>(c.root / "register" / "shape", "S",
                                                     data.unlabeled.size(), load_displacement_field);
  auto cfg = c.cfg.shape_vae;
  cfg.seed = c.seed;
  const auto vae = train_shape_vae(shapes, data.atlas, cfg);
  save_vae(vae, c.out.path("vae.ckpt"));
  vae.trace.write_csv(c.out.path("trace.csv"));
  if (!vae.trace.empty())
    c.metrics = {{"initial_total", vae.trace.head_mean("total", 50)},
                 {"final_total", vae.trace.tail_mean("total", 50)},
                 {"final_kl", vae.trace.tail_mean("kl", 50)}};
}

void train_intensity_vae_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto offsets = load_series<IntensityField>(c.root / "align-intensity" / "intensity", "I",
                                                   data.unlabeled.size(), load_intensity_field);
  auto cfg = c.cfg.intensity_vae;
  cfg.seed = c.seed;
  const auto vae = train_intensity_vae(offsets, cfg);
  save_vae(vae, c.out.path("vae.ckpt"));
  vae.trace.write_csv(c.out.path("trace.csv"));
  if (!vae.trace.empty())
    c.metrics = {{"initial_total", vae.trace.head_mean("total", 50)},
                 {"final_total", vae.trace.tail_mean("total", 50)},
                 {"final_kl", vae.trace.tail_mean("kl", 50)}};
}

std::shared_ptr<const SampleSources> load_sources(const ExperimentConfig& cfg, const fs::path& root,
                                                  AugmentationMode mode, const Dataset& data) {
  auto s = std::make_shared<SampleSources>(SampleSources{data.atlas, data.atlas_labels, {}, {},
                                                         nullptr, nullptr,
                                                         cfg.synthesis.sample_sigma,
                                                         cfg.synthesis.include_identity});
  const auto n = data.unlabeled.size();
  // The identity probability is tied to the registration pool size, so the
  // shape fields are loaded for every mode.
  s->shape_fields = load_series<DisplacementField>(root / "register" / "shape", "S", n,
                                                   load_displacement_field);
  if (uses_vae(mode)) {
    s->shape_vae = std::make_shared<TrainedVae>(load_vae(root / "train-shape-vae" / "vae.ckpt"));
    if (uses_intensity(mode))
      s->intensity_vae =
          std::make_shared<TrainedVae>(load_vae(root / "train-intensity-vae" / "vae.ckpt"));
  } else if (uses_intensity(mode)) {
    s->intensity_fields = load_series<IntensityField>(root / "align-intensity" / "intensity", "I",
                                                      n, load_intensity_field);
  }
  return s;
}

void synthesize_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto mode = c.cfg.synthesis.mode;
  SampleStream stream(mode, load_sources(c.cfg, c.root, mode, data), c.seed);
  json provenance = json::array();
  for (int64_t i = 0; i < c.cfg.synthesis.num_samples; ++i) {
    const auto sample = stream.next();
    save_volume(sample.image, c.out.path(indexed("sample_", i, "_image.v3d")));
    save_label_map(sample.labels, c.out.path(indexed("sample_", i, "_labels.v3d")));
    const auto& p = sample.provenance;
    provenance.push_back({{"index", i},
                          {"shape_source", p.shape_source},
                          {"intensity_source", p.intensity_source},
                          {"stream_seed", p.stream_seed},
                          {"draw_index", p.draw_index}});
  }
  c.out.json_file("samples.json", {{"mode", to_string(mode)}, {"samples", provenance}});
  c.metrics = {{"num_samples", c.cfg.synthesis.num_samples}};
}

SegmentationModel train_for_mode(const ExperimentConfig& cfg, const fs::path& root,
                                 AugmentationMode mode, const Dataset& data, uint64_t seed) {
  SampleStream stream(mode, load_sources(cfg, root, mode, data), derive_seed(seed, "stream"));
  auto seg_cfg = cfg.segmentation;
  seg_cfg.seed = derive_seed(seed, "network");
  return train_segmentation(stream, seg_cfg);
}

DiceReport evaluate_model(const ExperimentConfig& cfg, const SegmentationModel& model,
                          const Dataset& data, std::vector<LabelMap>* predictions = nullptr) {
  std::vector<LabelMap> preds;
  for (const auto& v : data.test_images) preds.push_back(segment_volume(model, v));
  auto report = evaluate(preds, data.test_labels, {}, cfg.evaluation.merge);
  if (predictions) *predictions = std::move(preds);
  return report;
}

json stats_json(const DiceStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

void train_seg_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto model = train_for_mode(c.cfg, c.root, c.cfg.synthesis.mode, data, c.seed);
  save_segmentation_model(model, c.out.path("model.ckpt"));
  model.trace.write_csv(c.out.path("trace.csv"));
  if (!model.trace.empty())
    c.metrics = {{"initial_loss", model.trace.head_mean("loss", 50)},
                 {"final_loss", model.trace.tail_mean("loss", 50)}};
}

void evaluate_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto model = load_segmentation_model(c.root / "train-seg" / "model.ckpt");
  std::vector<LabelMap> preds;
  const auto report = evaluate_model(c.cfg, model, data, &preds);
  for (std::size_t i = 0; i < preds.size(); ++i)
    save_label_map(preds[i], c.out.path("predictions/" + indexed("t", i, "_pred.v3d")));
  c.out.json_file("report.json", report);
  write_report_csv(report, c.out.path("report.csv"));
  write_region_bars(report, c.out.path("regions.csv"));
  c.out.text("table.txt", format_table({{to_string(c.cfg.synthesis.mode), report}}));
  c.metrics = stats_json(report.aggregate);
}

void ablate_stage(StageContext& c) {
  const auto data = load_dataset(c.root, c.cfg.num_classes());
  const auto tests = load_series<DisplacementField>(c.root / "register" / "test_fields", "T",
                                                    data.test_images.size(),
                                                    load_displacement_field);
  std::vector<LabelMap> transferred;
  for (const auto& t : tests) transferred.push_back(warp_nearest(data.atlas_labels, t));
  std::vector<TableRow> rows{
      {"registration", evaluate(transferred, data.test_labels, {}, c.cfg.evaluation.merge)}};

  for (auto mode : c.cfg.ablation.modes) {
    const std::string name = to_string(mode);
    const auto model = train_for_mode(c.cfg, c.root, mode, data, derive_seed(c.seed, name));
    model.trace.write_csv(c.out.path(name + "_trace.csv"));
    rows.push_back({name, evaluate_model(c.cfg, model, data)});
  }

  json table = json::array();
  for (const auto& r : rows) {
    c.out.json_file(r.method + "_report.json", r.report);
    table.push_back({{"method", r.method},
                     {"row", format_table_row(r.report)},
                     {"aggregate", stats_json(r.report.aggregate)}});
    c.metrics[r.method] = r.report.aggregate.mean;
  }
  c.out.json_file("table.json", table);
  c.out.text("table.txt", format_table(rows));
}

using StageFn = std::function<void(StageContext&)>;

const std::map<std::string, StageFn>& stage_functions() {
  static const std::map<std::string, StageFn> fns{
      {"gen-data", gen_data},
      {"register", register_stage},
      {"align-intensity", align_intensity},
      {"train-shape-vae", train_shape_vae_stage},
      {"train-intensity-vae", train_intensity_vae_stage},
      {"synthesize", synthesize_stage},
      {"train-seg", train_seg_stage},
      {"evaluate", evaluate_stage},
      {"ablate", ablate_stage},
  };
  return fns;
}

std::vector<std::string> source_dependencies(AugmentationMode mode) {
  std::vector<std::string> deps{"gen-data", "register"};
  if (uses_vae(mode)) {
    deps.push_back("train-shape-vae");
    if (uses_intensity(mode)) deps.push_back("train-intensity-vae");
  } else if (uses_intensity(mode)) {
    deps.push_back("align-intensity");
  }
  return deps;
}

json synthesis_stream_json(const SynthesisConfig& s) {
  return {{"sample_sigma", s.sample_sigma}, {"include_identity", s.include_identity}};
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg, fs::path root)
    : cfg_(std::move(cfg)), root_(std::move(root)), manifest_(root_) {
  cfg_.validate();
}

const std::vector<std::string>& Pipeline::stages() {
  static const std::vector<std::string> names{
      "gen-data", "register", "align-intensity", "train-shape-vae", "train-intensity-vae",
      "synthesize", "train-seg", "evaluate", "ablate"};
  return names;
}

std::vector<std::string> Pipeline::dependencies(const std::string& stage) const {
  if (stage == "gen-data") return {};
  if (stage == "register") return {"gen-data"};
  if (stage == "align-intensity") return {"gen-data", "register"};
  if (stage == "train-shape-vae") return {"gen-data", "register"};
  if (stage == "train-intensity-vae") return {"gen-data", "align-intensity"};
  if (stage == "synthesize" || stage == "train-seg") return source_dependencies(cfg_.synthesis.mode);
  if (stage == "evaluate") return {"gen-data", "train-seg"};
  if (stage == "ablate") {
    std::vector<std::string> deps{"gen-data", "register"};
    for (auto m : cfg_.ablation.modes)
      for (const auto& d : source_dependencies(m))
        if (std::find(deps.begin(), deps.end(), d) == deps.end()) deps.push_back(d);
    return deps;
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

json Pipeline::stage_config(const std::string& stage) const {
  const auto all = to_json(cfg_);
  json c;
  if (stage == "gen-data") c = all.at("data");
  else if (stage == "register") c = all.at("registration");
  else if (stage == "align-intensity") c = all.at("intensity");
  else if (stage == "train-shape-vae") c = all.at("shape_vae");
  else if (stage == "train-intensity-vae") c = all.at("intensity_vae");
  else if (stage == "synthesize") c = all.at("synthesis");
  else if (stage == "train-seg")
    c = {{"segmentation", all.at("segmentation")},
         {"mode", to_string(cfg_.synthesis.mode)},
         {"stream", synthesis_stream_json(cfg_.synthesis)}};
  else if (stage == "evaluate") c = all.at("evaluation");
  else if (stage == "ablate")
    c = {{"ablation", all.at("ablation")},
         {"segmentation", all.at("segmentation")},
         {"stream", synthesis_stream_json(cfg_.synthesis)},
         {"evaluation", all.at("evaluation")}};
  else throw ConfigError("unknown stage '" + stage + "'");
  // Per-module seed fields are replaced by derived stage seeds.
  if (c.is_object()) c.erase("seed");
  if (c.contains("segmentation")) c["segmentation"].erase("seed");
  if (c.contains("phantom")) c["phantom"].erase("seed");
  return {{"stage", stage}, {"config", c}, {"seed", cfg_.seed}};
}

StageResult Pipeline::run(const std::string& stage, bool force) {
  const auto& fns = stage_functions();
  const auto fn = fns.find(stage);
  if (fn == fns.end()) throw ConfigError("unknown stage '" + stage + "'");

  std::map<std::string, std::string> inputs;
  for (const auto& dep : dependencies(stage)) {
    if (!manifest_.complete(dep))
      throw DependencyError(dep, "stage '" + stage + "' requires '" + dep + "' to have run");
    for (auto& [path, hash] : manifest_.artifact_hashes(dep)) inputs[path] = hash;
  }

  const auto config_hash = hash_json(stage_config(stage));
  if (const auto existing = manifest_.find(stage); existing && !force) {
    if (existing->config_hash != config_hash)
      throw StaleArtifactError("artifacts of stage '" + stage +
                               "' were produced with a different configuration; rerun with --force");
    if (existing->inputs == inputs && manifest_.complete(stage))
      return {stage, true, existing->metrics};
  }

  const auto stage_dir = root_ / stage;
  if (fs::exists(stage_dir)) fs::remove_all(stage_dir);
  manifest_.erase(stage);

  StageWriter writer(root_, stage);
  json metrics = json::object();
  const auto seed = stage_seed(cfg_.seed, stage);
  StageContext ctx{cfg_, root_, seed, writer, metrics};
  fn->second(ctx);

  StageRecord record{config_hash, seed, inputs, writer.artifacts(), metrics};
  manifest_.put(stage, record);
  return {stage, false, metrics};
}

fs::path resolve_output_root(const ExperimentConfig& cfg,
                             const std::optional<fs::path>& explicit_out) {
  if (explicit_out) return *explicit_out;
  if (const char* env = std::getenv(kOutputEnvVar); env && *env) return env;
  return cfg.output_dir;
}

}  // namespace forge
