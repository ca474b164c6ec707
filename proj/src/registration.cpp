#include "forge/registration.hpp"

#include "forge/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/warp.hpp"

namespace F = torch::nn::functional;

namespace forge {
namespace {

torch::Tensor as_batch(const torch::Tensor& t) {
  if (t.dim() == 3) return t.unsqueeze(0).unsqueeze(0);
  require(t.dim() == 5 && t.size(1) == 1, "expected (D, H, W) or (N, 1, D, H, W)");
  return t;
}

/// Zero-padded sum over an n^3 window, as three separable 1D passes.
torch::Tensor box_sum(const torch::Tensor& x, int64_t n) {
  const int64_t r = n / 2;
  auto ones = torch::ones({n}, x.options());
  auto y = x;
  y = F::conv3d(y, ones.view({1, 1, n, 1, 1}), F::Conv3dFuncOptions().padding({r, 0, 0}));
  y = F::conv3d(y, ones.view({1, 1, 1, n, 1}), F::Conv3dFuncOptions().padding({0, r, 0}));
  y = F::conv3d(y, ones.view({1, 1, 1, 1, n}), F::Conv3dFuncOptions().padding({0, 0, r}));
  return y;
}

const char* direction_name(RegistrationDirection d) {
  return d == RegistrationDirection::AtlasToTarget ? "atlas_to_target" : "target_to_atlas";
}

RegistrationDirection direction_from(const std::string& s) {
  if (s == "atlas_to_target") return RegistrationDirection::AtlasToTarget;
  if (s == "target_to_atlas") return RegistrationDirection::TargetToAtlas;
  throw ConfigError("unknown registration direction '" + s + "'");
}

Unet3dArch arch_for(const RegistrationConfig& cfg) {
  return {2, 3, cfg.encoder_channels, cfg.decoder_channels};
}

torch::Tensor pair_input(const Volume& moving, const Volume& fixed) {
  return torch::stack({moving.tensor().to(torch::kFloat32), fixed.tensor().to(torch::kFloat32)})
      .unsqueeze(0);
}

}  // namespace

RegistrationConfig RegistrationConfig::desk_preset() {
  RegistrationConfig c;
  c.encoder_channels = {8, 16, 16, 16};
  c.decoder_channels = {16, 16, 16, 16, 8, 8};
  return c;
}

void RegistrationConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("RegistrationConfig: " + m); };
  if (patch_size < 3 || patch_size % 2 == 0) fail("patch_size must be odd and >= 3");
  if (encoder_channels.empty() || decoder_channels.size() < encoder_channels.size())
    fail("decoder needs at least as many layers as the encoder");
  for (auto c : encoder_channels) if (c < 1) fail("channel counts must be >= 1");
  for (auto c : decoder_channels) if (c < 1) fail("channel counts must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(cc_epsilon > 0.0)) fail("cc_epsilon must be > 0");
  if (!(smoothness_weight >= 0.0)) fail("smoothness_weight must be >= 0");
}

void to_json(nlohmann::json& j, const RegistrationConfig& c) {
  j = {{"patch_size", c.patch_size},
       {"smoothness_weight", c.smoothness_weight},
       {"encoder_channels", c.encoder_channels},
       {"decoder_channels", c.decoder_channels},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"cc_epsilon", c.cc_epsilon},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RegistrationConfig& c) {
  const RegistrationConfig d;
  c.patch_size = j.value("patch_size", d.patch_size);
  c.smoothness_weight = j.value("smoothness_weight", d.smoothness_weight);
  c.encoder_channels = j.value("encoder_channels", d.encoder_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.cc_epsilon = j.value("cc_epsilon", d.cc_epsilon);
  c.seed = j.value("seed", d.seed);
}

torch::Tensor local_cc_map(const torch::Tensor& a, const torch::Tensor& b, int64_t n, double eps) {
  require(n >= 1 && n % 2 == 1, "local_cc: patch size must be odd");
  require(a.sizes() == b.sizes(), "local_cc: shape mismatch");
  auto x = as_batch(a);
  auto y = as_batch(b);
  require(x.scalar_type() == y.scalar_type(), "local_cc: dtype mismatch");
  const double window = static_cast<double>(n * n * n);

  auto sx = box_sum(x, n), sy = box_sum(y, n);
  auto sxx = box_sum(x * x, n), syy = box_sum(y * y, n), sxy = box_sum(x * y, n);
  auto cross = sxy - sx * sy / window;
  auto var_x = (sxx - sx * sx / window).clamp_min(0.0);
  auto var_y = (syy - sy * sy / window).clamp_min(0.0);
  auto ratio = cross * cross / (var_x * var_y + eps);
  return ratio.view(a.sizes());
}

torch::Tensor local_cc_loss(const torch::Tensor& a, const torch::Tensor& b, int64_t n, double eps) {
  return local_cc_map(a, b, n, eps).sum();
}

double local_cc_loss(const Volume& a, const Volume& b, int64_t n, double eps) {
  require_same_shape(a.shape(), b.shape(), "local_cc_loss");
  torch::NoGradGuard no_grad;
  return local_cc_loss(a.tensor().to(torch::kFloat64), b.tensor().to(torch::kFloat64), n, eps)
      .item<double>();
}

torch::Tensor smoothness_loss(const torch::Tensor& field) {
  auto f = field.dim() == 4 ? field.unsqueeze(0) : field;
  require(f.dim() == 5, "smoothness_loss: expected (N, C, D, H, W) or (C, D, H, W)");
  auto sq = spatial_gradient(f).pow(2).sum({1, 2});  // (N, D, H, W)
  auto positive = sq > 0;
  auto safe = torch::where(positive, sq, torch::ones_like(sq));
  return torch::where(positive, torch::sqrt(safe), torch::zeros_like(sq)).sum();
}

double smoothness_loss(const DisplacementField& field) {
  torch::NoGradGuard no_grad;
  return smoothness_loss(field.tensor().to(torch::kFloat64)).item<double>();
}

RegistrationModel make_registration_model(const RegistrationConfig& cfg,
                                          RegistrationDirection direction) {
  cfg.validate();
  seed_parameter_init(derive_seed(cfg.seed, "registration/init"));
  RegistrationModel model{Unet3d(arch_for(cfg)), cfg, direction,
                          LossTrace({"epoch", "loss", "cc", "smoothness"})};
  return model;
}

RegistrationModel train_registration(const Volume& atlas, std::span<const Volume> unlabeled,
                                     const RegistrationConfig& cfg,
                                     RegistrationDirection direction) {
  if (unlabeled.empty()) throw ConfigError("train_registration: no unlabeled volumes");
  for (const auto& v : unlabeled) require_same_shape(atlas.shape(), v.shape(), "train_registration");
  auto model = make_registration_model(cfg, direction);
  if (cfg.epochs == 0) return model;

  auto& net = model.net;
  net->train();
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  auto order_gen = make_generator(derive_seed(cfg.seed, "registration/order"));
  const auto count = static_cast<int64_t>(unlabeled.size());
  const auto atlas_t = atlas.tensor().to(torch::kFloat32);
  int64_t step = 0;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto perm = torch::randperm(count, order_gen, torch::kInt64);
    double sum_loss = 0.0, sum_cc = 0.0, sum_smooth = 0.0;
    for (int64_t start = 0; start < count; start += cfg.batch_size) {
      const int64_t stop = std::min(count, start + cfg.batch_size);
      std::vector<torch::Tensor> moving, fixed;
      for (int64_t i = start; i < stop; ++i) {
        const auto& other = unlabeled[static_cast<std::size_t>(perm[i].item<int64_t>())].tensor();
        const auto other_t = other.to(torch::kFloat32);
        if (direction == RegistrationDirection::AtlasToTarget) {
          moving.push_back(atlas_t);
          fixed.push_back(other_t);
        } else {
          moving.push_back(other_t);
          fixed.push_back(atlas_t);
        }
      }
      auto mov = torch::stack(moving).unsqueeze(1);
      auto fix = torch::stack(fixed).unsqueeze(1);
      auto field = net->forward(torch::cat({mov, fix}, 1));
      auto warped = warp_trilinear(mov, field);
      auto cc = local_cc_loss(fix, warped, cfg.patch_size, cfg.cc_epsilon);
      auto smooth = smoothness_loss(field);
      auto loss = -cc + cfg.smoothness_weight * smooth;
      check_finite(loss, "train_registration", epoch);

      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      ++step;
      sum_loss += loss.item<double>();
      sum_cc += cc.item<double>();
      sum_smooth += smooth.item<double>();
    }
    const double n = static_cast<double>(count);
    model.trace.append({static_cast<double>(epoch), sum_loss / n, sum_cc / n, sum_smooth / n});
  }
  net->eval();
  return model;
}

DisplacementField predict_field(const RegistrationModel& model, const Volume& moving,
                                const Volume& fixed) {
  require_same_shape(moving.shape(), fixed.shape(), "predict_field");
  torch::NoGradGuard no_grad;
  auto net = model.net;
  auto out = net->forward(pair_input(moving, fixed));
  return DisplacementField(out[0]);
}

DisplacementField predict_forward_field(const RegistrationModel& model, const Volume& atlas,
                                        const Volume& target) {
  require(model.direction == RegistrationDirection::AtlasToTarget,
          "predict_forward_field: model was trained target-to-atlas");
  return predict_field(model, atlas, target);
}

DisplacementField predict_reverse_field(const RegistrationModel& reverse_model,
                                        const Volume& target, const Volume& atlas) {
  require(reverse_model.direction == RegistrationDirection::TargetToAtlas,
          "predict_reverse_field: model was trained atlas-to-target");
  return predict_field(reverse_model, target, atlas);
}

void save_registration_model(const RegistrationModel& model, const std::filesystem::path& path) {
  nlohmann::json meta = {{"kind", "registration"},
                         {"direction", direction_name(model.direction)},
                         {"architecture", model.net->arch()},
                         {"config", model.config},
                         {"seed", model.config.seed}};
  save_checkpoint(path, meta, *model.net);
}

RegistrationModel load_registration_model(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.value("kind", "") != "registration")
    throw IoError(IoErrorKind::DtypeMismatch, path.string(), "not a registration checkpoint");
  RegistrationModel model{Unet3d(meta.at("architecture").get<Unet3dArch>()),
                          meta.at("config").get<RegistrationConfig>(),
                          direction_from(meta.at("direction").get<std::string>()),
                          LossTrace({"epoch", "loss", "cc", "smoothness"})};
  load_checkpoint_tensors(path, *model.net);
  model.net->eval();
  return model;
}

}  // namespace forge
