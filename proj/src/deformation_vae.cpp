#include "forge/deformation_vae.hpp"

#include "forge/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/warp.hpp"

namespace forge {
namespace {

const std::vector<std::string> kTraceColumns{"iteration", "total", "deformation", "image", "kl"};

int64_t channels_for(VaeKind kind) { return kind == VaeKind::Shape ? 3 : 1; }

const char* kind_name(VaeKind kind) { return kind == VaeKind::Shape ? "shape" : "intensity"; }

VaeKind kind_from(const std::string& s) {
  if (s == "shape") return VaeKind::Shape;
  if (s == "intensity") return VaeKind::Intensity;
  throw ConfigError("unknown VAE kind '" + s + "'");
}

torch::Tensor as_field(const torch::Tensor& t, VaeKind kind) {
  if (kind == VaeKind::Intensity && t.dim() == 3) return t.unsqueeze(0);
  require(t.dim() == 4 && t.size(0) == channels_for(kind),
          std::string("train_vae: bad ") + kind_name(kind) + " field shape");
  return t;
}

}  // namespace

torch::Tensor kl_loss(const torch::Tensor& mu, const torch::Tensor& logvar) {
  require(mu.sizes() == logvar.sizes(), "kl_loss: mu and logvar differ in shape");
  return 0.5 * (torch::exp(logvar) + mu * mu - 1.0 - logvar).sum();
}

double kl_loss(std::span<const double> mu, std::span<const double> logvar) {
  require(mu.size() == logvar.size(), "kl_loss: mu and logvar differ in length");
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k)
    s += std::exp(logvar[k]) + mu[k] * mu[k] - 1.0 - logvar[k];
  return 0.5 * s;
}

ShapeVaeLosses shape_vae_loss(const torch::Tensor& field, const torch::Tensor& reconstruction,
                              const torch::Tensor& atlas, const torch::Tensor& mu,
                              const torch::Tensor& logvar, double beta) {
  require(field.dim() == 5 && field.size(1) == 3, "shape_vae_loss: field must be (N, 3, D, H, W)");
  require(field.sizes() == reconstruction.sizes(), "shape_vae_loss: reconstruction shape mismatch");
  require(atlas.dim() == 5 && atlas.size(1) == 1, "shape_vae_loss: atlas must be (N, 1, D, H, W)");
  require_same_shape(GridShape::of(field), GridShape::of(atlas), "shape_vae_loss");
  auto moving = atlas.size(0) == field.size(0) ? atlas : atlas.expand({field.size(0), 1, -1, -1, -1});

  auto deformation = (field - reconstruction).pow(2).sum();
  auto image = (warp_trilinear(moving, field) - warp_trilinear(moving, reconstruction)).pow(2).sum();
  auto kl = kl_loss(mu, logvar);
  return {deformation, image, kl, (deformation + image) + beta * kl};
}

IntensityVaeLosses intensity_vae_loss(const torch::Tensor& offset,
                                      const torch::Tensor& reconstruction,
                                      const torch::Tensor& mu, const torch::Tensor& logvar,
                                      double beta) {
  require(offset.sizes() == reconstruction.sizes(), "intensity_vae_loss: shape mismatch");
  auto deformation = (offset - reconstruction).pow(2).sum();
  auto kl = kl_loss(mu, logvar);
  return {deformation, kl, deformation + beta * kl};
}

VaeConfig VaeConfig::desk_preset() {
  VaeConfig c;
  c.iterations = 2000;
  c.widths = {8, 16, 32, 32};
  return c;
}

void VaeConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("VaeConfig: " + m); };
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (!(beta > 0.0)) fail("beta must be > 0");
  if (!(sample_sigma > 0.0)) fail("sample_sigma must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (iterations < 0) fail("iterations must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("Adam betas must lie in [0, 1)");
  if (group_norm_groups < 1) fail("group_norm_groups must be >= 1");
  if (widths.empty()) fail("widths must not be empty");
  for (auto w : widths) if (w < 1) fail("widths must be >= 1");
}

void to_json(nlohmann::json& j, const VaeConfig& c) {
  j = {{"latent_dim", c.latent_dim},
       {"beta", c.beta},
       {"sample_sigma", c.sample_sigma},
       {"learning_rate", c.learning_rate},
       {"iterations", c.iterations},
       {"batch_size", c.batch_size},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"group_norm_groups", c.group_norm_groups},
       {"widths", c.widths},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, VaeConfig& c) {
  const VaeConfig d;
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.beta = j.value("beta", d.beta);
  c.sample_sigma = j.value("sample_sigma", d.sample_sigma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.iterations = j.value("iterations", d.iterations);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.group_norm_groups = j.value("group_norm_groups", d.group_norm_groups);
  c.widths = j.value("widths", d.widths);
  c.seed = j.value("seed", d.seed);
}

TrainedVae make_vae(VaeKind kind, const GridShape& grid, const VaeConfig& cfg) {
  cfg.validate();
  seed_parameter_init(derive_seed(cfg.seed, std::string("vae/init/") + kind_name(kind)));
  VaeArch arch{channels_for(kind), grid, cfg.widths, cfg.latent_dim, cfg.group_norm_groups};
  return {DeformationVae(arch), cfg, kind, LossTrace(kTraceColumns)};
}

TrainedVae train_vae(const std::vector<torch::Tensor>& fields, const std::optional<Volume>& atlas,
                     const VaeConfig& cfg, VaeKind kind) {
  if (fields.empty()) throw ConfigError("train_vae: no training fields");
  std::vector<torch::Tensor> data;
  data.reserve(fields.size());
  for (const auto& f : fields) data.push_back(as_field(f, kind).detach().to(torch::kFloat32));
  const auto grid = GridShape::of(data.front());
  for (const auto& f : data) require_same_shape(grid, GridShape::of(f), "train_vae");
  if (kind == VaeKind::Shape) {
    if (!atlas) throw ConfigError("train_vae: the shape VAE needs the atlas");
    require_same_shape(grid, atlas->shape(), "train_vae atlas");
  }

  auto vae = make_vae(kind, grid, cfg);
  if (cfg.iterations == 0) return vae;
  auto& net = vae.net;
  net->train();
  torch::optim::Adam optimizer(
      net->parameters(),
      torch::optim::AdamOptions(cfg.learning_rate).betas({cfg.adam_beta1, cfg.adam_beta2}));
  auto gen = make_generator(derive_seed(cfg.seed, std::string("vae/train/") + kind_name(kind)));
  const auto stack = torch::stack(data);
  torch::Tensor atlas_t;
  if (atlas) atlas_t = atlas->tensor().to(torch::kFloat32).unsqueeze(0).unsqueeze(0);

  for (int64_t it = 1; it <= cfg.iterations; ++it) {
    auto idx = torch::randint(static_cast<int64_t>(data.size()), {cfg.batch_size}, gen, torch::kInt64);
    auto x = stack.index_select(0, idx);
    auto out = net->forward(x, gen);
    torch::Tensor total, deformation, image, kl;
    if (kind == VaeKind::Shape) {
      auto l = shape_vae_loss(x, out.reconstruction, atlas_t, out.mu, out.logvar, cfg.beta);
      total = l.total, deformation = l.deformation, image = l.image, kl = l.kl;
    } else {
      auto l = intensity_vae_loss(x, out.reconstruction, out.mu, out.logvar, cfg.beta);
      total = l.total, deformation = l.deformation, kl = l.kl;
      image = torch::zeros({});
    }
    check_finite(total, "train_vae", it);
    optimizer.zero_grad();
    total.backward();
    optimizer.step();
    vae.trace.append({static_cast<double>(it), total.item<double>(), deformation.item<double>(),
                      image.item<double>(), kl.item<double>()});
  }
  net->eval();
  return vae;
}

TrainedVae train_shape_vae(std::span<const DisplacementField> fields, const Volume& atlas,
                           const VaeConfig& cfg) {
  std::vector<torch::Tensor> data;
  for (const auto& f : fields) data.push_back(f.tensor());
  return train_vae(data, atlas, cfg, VaeKind::Shape);
}

TrainedVae train_intensity_vae(std::span<const IntensityField> fields, const VaeConfig& cfg) {
  std::vector<torch::Tensor> data;
  for (const auto& f : fields) data.push_back(f.tensor());
  return train_vae(data, std::nullopt, cfg, VaeKind::Intensity);
}

torch::Tensor sample_field(const TrainedVae& vae, double sigma, at::Generator& gen) {
  require(sigma >= 0.0, "sample_field: sigma must be >= 0");
  torch::NoGradGuard no_grad;
  auto z = sigma * torch::randn({1, vae.net->arch().latent_dim}, gen, torch::kFloat32);
  auto net = vae.net;
  return net->decode(z)[0];
}

DisplacementField sample_shape_field(const TrainedVae& vae, double sigma, at::Generator& gen) {
  require(vae.kind == VaeKind::Shape, "sample_shape_field: not a shape VAE");
  return DisplacementField(sample_field(vae, sigma, gen));
}

IntensityField sample_intensity_field(const TrainedVae& vae, double sigma, at::Generator& gen) {
  require(vae.kind == VaeKind::Intensity, "sample_intensity_field: not an intensity VAE");
  return IntensityField(sample_field(vae, sigma, gen)[0]);
}

torch::Tensor reconstruct_mean(const TrainedVae& vae, const torch::Tensor& field) {
  torch::NoGradGuard no_grad;
  auto x = as_field(field, vae.kind).to(torch::kFloat32).unsqueeze(0);
  auto net = vae.net;
  return net->decode(net->encode(x).first)[0];
}

void save_vae(const TrainedVae& vae, const std::filesystem::path& path) {
  nlohmann::json meta = {{"kind", "vae"},
                         {"vae_kind", kind_name(vae.kind)},
                         {"architecture", vae.net->arch()},
                         {"config", vae.config},
                         {"seed", vae.config.seed}};
  save_checkpoint(path, meta, *vae.net);
}

TrainedVae load_vae(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.value("kind", "") != "vae")
    throw IoError(IoErrorKind::DtypeMismatch, path.string(), "not a VAE checkpoint");
  TrainedVae vae{DeformationVae(meta.at("architecture").get<VaeArch>()),
                 meta.at("config").get<VaeConfig>(),
                 kind_from(meta.at("vae_kind").get<std::string>()), LossTrace(kTraceColumns)};
  load_checkpoint_tensors(path, *vae.net);
  vae.net->eval();
  return vae;
}

}  // namespace forge
