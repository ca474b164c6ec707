#include "forge/intensity_alignment.hpp"

#include "forge/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/warp.hpp"

namespace forge {
namespace {

/// Voxels that differ from their neighbour one step further along `axis`
/// (both sides of each boundary are marked).
torch::Tensor boundary_along(const torch::Tensor& labels, int64_t axis) {
  const auto n = labels.size(axis);
  auto differ = labels.narrow(axis, 1, n - 1) != labels.narrow(axis, 0, n - 1);
  auto out = torch::zeros(labels.sizes(), torch::kBool);
  out.narrow(axis, 0, n - 1).logical_or_(differ);
  out.narrow(axis, 1, n - 1).logical_or_(differ);
  return out;
}

torch::Tensor dilate6(const torch::Tensor& mask) {
  auto out = mask.clone();
  for (int64_t axis = 0; axis < 3; ++axis) {
    const auto n = mask.size(axis);
    out.narrow(axis, 0, n - 1).logical_or_(mask.narrow(axis, 1, n - 1));
    out.narrow(axis, 1, n - 1).logical_or_(mask.narrow(axis, 0, n - 1));
  }
  return out;
}

}  // namespace

ContourMask::ContourMask(const torch::Tensor& mask) {
  require(mask.dim() == 3, "ContourMask: expected (D, H, W)");
  auto m = mask.detach().to(torch::kInt64);
  require(((m == 0) | (m == 1)).all().item<bool>(), "ContourMask: mask must be binary");
  mask_ = m.to(torch::kUInt8).contiguous();
}

int64_t ContourMask::count() const { return mask_.sum().item<int64_t>(); }

ContourMask contour_mask(const LabelMap& atlas_labels, int64_t dilation) {
  require(dilation >= 0, "contour_mask: dilation must be >= 0");
  const auto& labels = atlas_labels.tensor();
  auto mask = boundary_along(labels, 0) | boundary_along(labels, 1) | boundary_along(labels, 2);
  for (int64_t i = 0; i < dilation; ++i) mask = dilate6(mask);
  return ContourMask(mask);
}

IntensityLosses intensity_losses(const torch::Tensor& atlas, const torch::Tensor& offset,
                                 const torch::Tensor& field, const torch::Tensor& target,
                                 const torch::Tensor& mask, double lambda) {
  require(atlas.dim() == 5 && atlas.size(1) == 1, "intensity_losses: atlas must be (N, 1, D, H, W)");
  require(offset.sizes() == atlas.sizes() && target.sizes() == atlas.sizes(),
          "intensity_losses: offset/target shape mismatch");
  require(field.dim() == 5 && field.size(1) == 3 && field.size(0) == atlas.size(0),
          "intensity_losses: field must be (N, 3, D, H, W)");
  require_same_shape(GridShape::of(atlas), GridShape::of(field), "intensity_losses");
  require_same_shape(GridShape::of(atlas), GridShape::of(mask), "intensity_losses mask");

  auto moved = warp_trilinear(atlas + offset, field);
  auto similarity = (moved - target).pow(2).sum();
  auto weight = 1.0 - mask.to(offset.scalar_type());
  auto grad_l1 = spatial_gradient(offset).abs().sum(2);  // (N, 1, D, H, W)
  auto regularity = (weight * grad_l1).sum();
  return {similarity, regularity, similarity + lambda * regularity};
}

IntensityLossValues intensity_losses(const Volume& atlas, const IntensityField& offset,
                                     const DisplacementField& field, const Volume& target,
                                     const ContourMask& mask, double lambda) {
  require_same_shape(atlas.shape(), offset.shape(), "intensity_losses");
  require_same_shape(atlas.shape(), target.shape(), "intensity_losses");
  torch::NoGradGuard no_grad;
  auto batch = [](const torch::Tensor& t) { return t.to(torch::kFloat64).unsqueeze(0).unsqueeze(0); };
  auto l = intensity_losses(batch(atlas.tensor()), batch(offset.tensor()),
                            field.tensor().to(torch::kFloat64).unsqueeze(0), batch(target.tensor()),
                            mask.tensor(), lambda);
  return {l.similarity.item<double>(), l.regularity.item<double>(), l.total.item<double>()};
}

IntensityAlignConfig IntensityAlignConfig::desk_preset() {
  IntensityAlignConfig c;
  c.encoder_channels = {8, 16, 16, 16};
  c.decoder_channels = {16, 16, 16, 16, 8, 8};
  return c;
}

void IntensityAlignConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("IntensityAlignConfig: " + m); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (encoder_channels.empty() || decoder_channels.size() < encoder_channels.size())
    fail("decoder needs at least as many layers as the encoder");
  for (auto c : encoder_channels) if (c < 1) fail("channel counts must be >= 1");
  for (auto c : decoder_channels) if (c < 1) fail("channel counts must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (contour_dilation < 0) fail("contour_dilation must be >= 0");
}

void to_json(nlohmann::json& j, const IntensityAlignConfig& c) {
  j = {{"lambda", c.lambda},
       {"encoder_channels", c.encoder_channels},
       {"decoder_channels", c.decoder_channels},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"contour_dilation", c.contour_dilation},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, IntensityAlignConfig& c) {
  const IntensityAlignConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.contour_dilation = j.value("contour_dilation", d.contour_dilation);
  c.seed = j.value("seed", d.seed);
}

IntensityAlignModel make_intensity_model(const IntensityAlignConfig& cfg) {
  cfg.validate();
  seed_parameter_init(derive_seed(cfg.seed, "intensity/init"));
  return {Unet3d(Unet3dArch{2, 1, cfg.encoder_channels, cfg.decoder_channels}), cfg,
          LossTrace({"epoch", "loss", "similarity", "regularity"})};
}

IntensityAlignModel train_intensity(const Volume& atlas, std::span<const Volume> inverse_warped,
                                    std::span<const DisplacementField> forward_fields,
                                    std::span<const Volume> targets, const ContourMask& mask,
                                    const IntensityAlignConfig& cfg) {
  if (inverse_warped.empty()) throw ConfigError("train_intensity: no training volumes");
  if (inverse_warped.size() != forward_fields.size() || inverse_warped.size() != targets.size())
    throw ConfigError("train_intensity: inverse_warped, fields and targets differ in length");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require_same_shape(atlas.shape(), inverse_warped[i].shape(), "train_intensity");
    require_same_shape(atlas.shape(), forward_fields[i].shape(), "train_intensity");
    require_same_shape(atlas.shape(), targets[i].shape(), "train_intensity");
  }
  require_same_shape(atlas.shape(), GridShape::of(mask.tensor()), "train_intensity mask");

  auto model = make_intensity_model(cfg);
  if (cfg.epochs == 0) return model;
  auto& net = model.net;
  net->train();
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  auto order_gen = make_generator(derive_seed(cfg.seed, "intensity/order"));
  const auto count = static_cast<int64_t>(targets.size());
  const auto atlas_t = atlas.tensor().to(torch::kFloat32);

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto perm = torch::randperm(count, order_gen, torch::kInt64);
    double sum_loss = 0.0, sum_sim = 0.0, sum_reg = 0.0;
    for (int64_t start = 0; start < count; start += cfg.batch_size) {
      const int64_t stop = std::min(count, start + cfg.batch_size);
      std::vector<torch::Tensor> inputs, fields, goals;
      for (int64_t i = start; i < stop; ++i) {
        const auto k = static_cast<std::size_t>(perm[i].item<int64_t>());
        inputs.push_back(torch::stack({atlas_t, inverse_warped[k].tensor().to(torch::kFloat32)}));
        fields.push_back(forward_fields[k].tensor().to(torch::kFloat32));
        goals.push_back(targets[k].tensor().to(torch::kFloat32));
      }
      auto x = torch::stack(inputs);
      const auto batch = x.size(0);
      auto offset = net->forward(x);
      auto atlas_b = atlas_t.unsqueeze(0).unsqueeze(0).expand({batch, 1, -1, -1, -1});
      auto l = intensity_losses(atlas_b, offset, torch::stack(fields),
                                torch::stack(goals).unsqueeze(1), mask.tensor(), cfg.lambda);
      check_finite(l.total, "train_intensity", epoch);
      optimizer.zero_grad();
      l.total.backward();
      optimizer.step();
      sum_loss += l.total.item<double>();
      sum_sim += l.similarity.item<double>();
      sum_reg += l.regularity.item<double>();
    }
    const double n = static_cast<double>(count);
    model.trace.append({static_cast<double>(epoch), sum_loss / n, sum_sim / n, sum_reg / n});
  }
  net->eval();
  return model;
}

IntensityField predict_intensity(const IntensityAlignModel& model, const Volume& atlas,
                                 const Volume& inverse_warped) {
  require_same_shape(atlas.shape(), inverse_warped.shape(), "predict_intensity");
  torch::NoGradGuard no_grad;
  auto x = torch::stack({atlas.tensor().to(torch::kFloat32),
                         inverse_warped.tensor().to(torch::kFloat32)})
               .unsqueeze(0);
  auto net = model.net;
  return IntensityField(net->forward(x)[0][0]);
}

void save_intensity_model(const IntensityAlignModel& model, const std::filesystem::path& path) {
  nlohmann::json meta = {{"kind", "intensity_alignment"},
                         {"architecture", model.net->arch()},
                         {"config", model.config},
                         {"seed", model.config.seed}};
  save_checkpoint(path, meta, *model.net);
}

IntensityAlignModel load_intensity_model(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.value("kind", "") != "intensity_alignment")
    throw IoError(IoErrorKind::DtypeMismatch, path.string(), "not an intensity checkpoint");
  IntensityAlignModel model{Unet3d(meta.at("architecture").get<Unet3dArch>()),
                            meta.at("config").get<IntensityAlignConfig>(),
                            LossTrace({"epoch", "loss", "similarity", "regularity"})};
  load_checkpoint_tensors(path, *model.net);
  model.net->eval();
  return model;
}

}  // namespace forge
