#include "forge/segmentation.hpp"

#include "forge/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/seeding.hpp"

namespace F = torch::nn::functional;

namespace forge {
namespace {

/// Moves `axis` of a (D, H, W) grid to the front: (S, A, B).
torch::Tensor slices_along(const torch::Tensor& grid, int64_t axis) {
  return grid.movedim(axis, 0).contiguous();
}

}  // namespace

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  auto x = logits.dim() == 3 ? logits.unsqueeze(0) : logits;
  auto y = target.dim() == 2 ? target.unsqueeze(0) : target;
  require(x.dim() == 4 && y.dim() == 3, "ce_loss: expected logits (B, K, H, W), targets (B, H, W)");
  require(x.size(0) == y.size(0) && x.size(2) == y.size(1) && x.size(3) == y.size(2),
          "ce_loss: spatial shape mismatch");
  y = y.to(torch::kInt64);
  const auto k = x.size(1);
  require(y.min().item<int64_t>() >= 0 && y.max().item<int64_t>() < k,
          "ce_loss: target label out of range");
  auto log_p = torch::log_softmax(x, 1);
  return -log_p.gather(1, y.unsqueeze(1)).mean();
}

SegmentationConfig SegmentationConfig::desk_preset() {
  SegmentationConfig c;
  c.iterations = 3000;
  c.encoder_channels = {8, 16, 16, 32, 32};
  c.decoder_channels = {32, 16, 16, 8, 8};
  return c;
}

void SegmentationConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("SegmentationConfig: " + m); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (slice_axis < 0 || slice_axis > 2) fail("slice_axis must be 0, 1 or 2");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (encoder_channels.size() != 5 || decoder_channels.size() != 5)
    fail("encoder and decoder need five widths each");
  for (auto c : encoder_channels) if (c < 1) fail("channel counts must be >= 1");
  for (auto c : decoder_channels) if (c < 1) fail("channel counts must be >= 1");
}

void to_json(nlohmann::json& j, const SegmentationConfig& c) {
  j = {{"num_classes", c.num_classes},
       {"slice_axis", c.slice_axis},
       {"batch_size", c.batch_size},
       {"iterations", c.iterations},
       {"learning_rate", c.learning_rate},
       {"encoder_channels", c.encoder_channels},
       {"decoder_channels", c.decoder_channels},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SegmentationConfig& c) {
  const SegmentationConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.slice_axis = j.value("slice_axis", d.slice_axis);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.iterations = j.value("iterations", d.iterations);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.seed = j.value("seed", d.seed);
}

SegmentationModel make_segmentation_model(const SegmentationConfig& cfg) {
  cfg.validate();
  seed_parameter_init(derive_seed(cfg.seed, "segmentation/init"));
  Unet2dArch arch{1, cfg.num_classes, cfg.encoder_channels, cfg.decoder_channels};
  return {Unet2d(arch), cfg, LossTrace({"iteration", "loss"})};
}

SegmentationModel train_segmentation(SampleSource& source, const SegmentationConfig& cfg) {
  auto model = make_segmentation_model(cfg);
  if (cfg.iterations == 0) return model;
  auto& net = model.net;
  net->train();
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  auto gen = make_generator(derive_seed(cfg.seed, "segmentation/slices"));

  for (int64_t it = 1; it <= cfg.iterations; ++it) {
    const auto sample = source.next();
    if (sample.labels.num_classes() > cfg.num_classes ||
        sample.labels.tensor().max().item<int64_t>() >= cfg.num_classes)
      throw ContractError("train_segmentation: sample labels exceed num_classes");
    auto images = slices_along(sample.image.tensor().to(torch::kFloat32), cfg.slice_axis);
    auto labels = slices_along(sample.labels.tensor(), cfg.slice_axis);
    const auto count = images.size(0);
    auto pick = torch::randperm(count, gen, torch::kInt64).narrow(0, 0, std::min(count, cfg.batch_size));
    auto x = images.index_select(0, pick).unsqueeze(1);
    auto y = labels.index_select(0, pick);

    auto loss = ce_loss(net->forward(x), y);
    check_finite(loss, "train_segmentation", it);
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    model.trace.append({static_cast<double>(it), loss.item<double>()});
  }
  net->eval();
  return model;
}

LabelMap segment_volume(const SegmentationModel& model, const Volume& volume) {
  torch::NoGradGuard no_grad;
  const auto axis = model.config.slice_axis;
  auto slices = slices_along(volume.tensor().to(torch::kFloat32), axis).unsqueeze(1);
  auto net = model.net;
  auto logits = net->forward(slices);
  auto pred = logits.argmax(1);  // (S, A, B)
  return LabelMap(pred.movedim(0, axis), model.config.num_classes);
}

void save_segmentation_model(const SegmentationModel& model, const std::filesystem::path& path) {
  nlohmann::json meta = {{"kind", "segmentation"},
                         {"architecture", model.net->arch()},
                         {"config", model.config},
                         {"seed", model.config.seed}};
  save_checkpoint(path, meta, *model.net);
}

SegmentationModel load_segmentation_model(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.value("kind", "") != "segmentation")
    throw IoError(IoErrorKind::DtypeMismatch, path.string(), "not a segmentation checkpoint");
  SegmentationModel model{Unet2d(meta.at("architecture").get<Unet2dArch>()),
                          meta.at("config").get<SegmentationConfig>(),
                          LossTrace({"iteration", "loss"})};
  load_checkpoint_tensors(path, *model.net);
  model.net->eval();
  return model;
}

}  // namespace forge
