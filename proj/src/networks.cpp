#include "forge/networks.hpp"

#include "forge/error.hpp"

#include <numeric>

namespace F = torch::nn::functional;

namespace forge {
namespace {

constexpr double kLeakySlope = 0.2;

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

torch::nn::Conv3d conv3(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride(stride).padding(1));
}

torch::Tensor upsample_to(const torch::Tensor& x, at::IntArrayRef size) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>(size.begin(), size.end()))
                               .mode(torch::kNearest));
}

/// Largest divisor of `channels` not exceeding `groups`.
int64_t group_count(int64_t channels, int64_t groups) {
  int64_t g = std::min(channels, std::max<int64_t>(groups, 1));
  while (channels % g != 0) --g;
  return g;
}

void require_positive(const std::vector<int64_t>& widths, const char* what) {
  require(!widths.empty(), std::string(what) + ": channel list is empty");
  for (auto w : widths) require(w >= 1, std::string(what) + ": channel counts must be >= 1");
}

}  // namespace

// ----------------------------------------------------------------- Unet3d

void to_json(nlohmann::json& j, const Unet3dArch& a) {
  j = {{"in_channels", a.in_channels},
       {"out_channels", a.out_channels},
       {"encoder", a.encoder},
       {"decoder", a.decoder}};
}

void from_json(const nlohmann::json& j, Unet3dArch& a) {
  j.at("in_channels").get_to(a.in_channels);
  j.at("out_channels").get_to(a.out_channels);
  j.at("encoder").get_to(a.encoder);
  j.at("decoder").get_to(a.decoder);
}

Unet3dImpl::Unet3dImpl(Unet3dArch arch) : arch_(std::move(arch)) {
  require_positive(arch_.encoder, "Unet3d encoder");
  require_positive(arch_.decoder, "Unet3d decoder");
  require(arch_.decoder.size() >= arch_.encoder.size(),
          "Unet3d: decoder needs at least as many layers as the encoder");
  require(arch_.in_channels >= 1 && arch_.out_channels >= 1, "Unet3d: bad channel counts");

  const auto levels = arch_.encoder.size();
  int64_t prev = arch_.in_channels;
  for (auto w : arch_.encoder) {
    encoder_->push_back(conv3(prev, w, 2));
    prev = w;
  }
  // Upsampling path: conv, then concatenate the skip one level up.
  for (std::size_t i = 0; i < levels; ++i) {
    decoder_->push_back(conv3(prev, arch_.decoder[i], 1));
    const int64_t skip = i + 1 < levels ? arch_.encoder[levels - 2 - i] : arch_.in_channels;
    prev = arch_.decoder[i] + skip;
  }
  for (std::size_t i = levels; i < arch_.decoder.size(); ++i) {
    decoder_->push_back(conv3(prev, arch_.decoder[i], 1));
    prev = arch_.decoder[i];
  }
  head_ = conv3(prev, arch_.out_channels, 1);
  torch::NoGradGuard no_grad;
  head_->weight.zero_();
  head_->bias.zero_();

  register_module("encoder", encoder_);
  register_module("decoder", decoder_);
  register_module("head", head_);
}

torch::Tensor Unet3dImpl::forward(const torch::Tensor& x) {
  const auto levels = arch_.encoder.size();
  std::vector<torch::Tensor> skips{x};
  torch::Tensor y = x;
  for (std::size_t i = 0; i < levels; ++i) {
    y = leaky(encoder_[i]->as<torch::nn::Conv3d>()->forward(y));
    skips.push_back(y);
  }
  for (std::size_t i = 0; i < levels; ++i) {
    y = leaky(decoder_[i]->as<torch::nn::Conv3d>()->forward(y));
    const auto& skip = skips[levels - 1 - i];
    y = torch::cat({upsample_to(y, skip.sizes().slice(2)), skip}, 1);
  }
  for (std::size_t i = levels; i < arch_.decoder.size(); ++i) {
    y = leaky(decoder_[i]->as<torch::nn::Conv3d>()->forward(y));
  }
  return head_->forward(y);
}

// -------------------------------------------------------- DeformationVae

void to_json(nlohmann::json& j, const VaeArch& a) {
  j = {{"channels", a.channels},
       {"grid", a.grid.sizes()},
       {"widths", a.widths},
       {"latent_dim", a.latent_dim},
       {"groups", a.groups}};
}

void from_json(const nlohmann::json& j, VaeArch& a) {
  j.at("channels").get_to(a.channels);
  const auto g = j.at("grid").get<std::vector<int64_t>>();
  require(g.size() == 3, "VaeArch: grid must have three entries");
  a.grid = {g[0], g[1], g[2]};
  j.at("widths").get_to(a.widths);
  j.at("latent_dim").get_to(a.latent_dim);
  j.at("groups").get_to(a.groups);
}

DeformationVaeImpl::DeformationVaeImpl(VaeArch arch) : arch_(std::move(arch)) {
  require_positive(arch_.widths, "DeformationVae widths");
  require(arch_.latent_dim >= 1, "DeformationVae: latent_dim must be >= 1");
  require(arch_.channels >= 1, "DeformationVae: channels must be >= 1");

  level_sizes_.push_back(arch_.grid.sizes());
  int64_t prev = arch_.channels;
  for (auto w : arch_.widths) {
    encoder_->push_back(conv3(prev, w, 2));
    encoder_->push_back(torch::nn::GroupNorm(group_count(w, arch_.groups), w));
    encoder_->push_back(
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
    auto next = level_sizes_.back();
    for (auto& s : next) s = (s + 1) / 2;
    level_sizes_.push_back(next);
    prev = w;
  }
  const auto& bottom = level_sizes_.back();
  const int64_t flat = prev * std::accumulate(bottom.begin(), bottom.end(), int64_t{1},
                                              std::multiplies<>());
  mu_head_ = torch::nn::Linear(flat, arch_.latent_dim);
  logvar_head_ = torch::nn::Linear(flat, arch_.latent_dim);
  expand_ = torch::nn::Linear(arch_.latent_dim, flat);

  for (std::size_t k = arch_.widths.size() - 1; k >= 1; --k) {
    const int64_t out = arch_.widths[k - 1];
    decoder_convs_->push_back(conv3(arch_.widths[k], out, 1));
    decoder_norms_->push_back(torch::nn::GroupNorm(group_count(out, arch_.groups), out));
  }
  head_ = conv3(arch_.widths.front(), arch_.channels, 1);

  register_module("encoder", encoder_);
  register_module("mu_head", mu_head_);
  register_module("logvar_head", logvar_head_);
  register_module("expand", expand_);
  register_module("decoder_convs", decoder_convs_);
  register_module("decoder_norms", decoder_norms_);
  register_module("head", head_);
}

std::pair<torch::Tensor, torch::Tensor> DeformationVaeImpl::encode(const torch::Tensor& x) {
  require(x.dim() == 5 && x.size(1) == arch_.channels, "DeformationVae: bad input channels");
  require_same_shape(GridShape::of(x), arch_.grid, "DeformationVae::encode");
  auto h = encoder_->forward(x).flatten(1);
  return {mu_head_->forward(h), logvar_head_->forward(h)};
}

torch::Tensor DeformationVaeImpl::decode(const torch::Tensor& z) {
  require(z.dim() == 2 && z.size(1) == arch_.latent_dim, "DeformationVae: bad latent shape");
  std::vector<int64_t> shape{z.size(0), arch_.widths.back()};
  const auto& bottom = level_sizes_.back();
  shape.insert(shape.end(), bottom.begin(), bottom.end());
  auto y = torch::relu(expand_->forward(z)).view(shape);
  const auto levels = arch_.widths.size();
  for (std::size_t i = 0; i + 1 < levels; ++i) {
    y = upsample_to(y, level_sizes_[levels - 1 - i]);
    y = decoder_convs_[i]->as<torch::nn::Conv3d>()->forward(y);
    y = torch::relu(decoder_norms_[i]->as<torch::nn::GroupNorm>()->forward(y));
  }
  y = upsample_to(y, level_sizes_.front());
  return head_->forward(y);
}

VaeForward DeformationVaeImpl::forward(const torch::Tensor& x, at::Generator& gen) {
  auto [mu, logvar] = encode(x);
  auto eps = torch::randn(mu.sizes(), gen, mu.options());
  auto z = mu + torch::exp(0.5 * logvar) * eps;
  return {decode(z), mu, logvar};
}

// ----------------------------------------------------------------- Unet2d

void to_json(nlohmann::json& j, const Unet2dArch& a) {
  j = {{"in_channels", a.in_channels},
       {"num_classes", a.num_classes},
       {"encoder", a.encoder},
       {"decoder", a.decoder}};
}

void from_json(const nlohmann::json& j, Unet2dArch& a) {
  j.at("in_channels").get_to(a.in_channels);
  j.at("num_classes").get_to(a.num_classes);
  j.at("encoder").get_to(a.encoder);
  j.at("decoder").get_to(a.decoder);
}

Unet2dImpl::Unet2dImpl(Unet2dArch arch) : arch_(std::move(arch)) {
  require(arch_.encoder.size() == 5 && arch_.decoder.size() == 5,
          "Unet2d: encoder and decoder need five widths each");
  require_positive(arch_.encoder, "Unet2d encoder");
  require_positive(arch_.decoder, "Unet2d decoder");
  require(arch_.num_classes >= 2, "Unet2d: num_classes must be >= 2");

  auto conv = [](int64_t in, int64_t out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
  };
  int64_t prev = arch_.in_channels;
  for (auto w : arch_.encoder) {
    encoder_->push_back(conv(prev, w));
    prev = w;
  }
  decoder_->push_back(conv(prev, arch_.decoder[0]));
  for (std::size_t j = 1; j < 5; ++j) {
    decoder_->push_back(conv(arch_.decoder[j - 1] + arch_.encoder[4 - j], arch_.decoder[j]));
  }
  head_ = torch::nn::Conv2d(torch::nn::Conv2dOptions(arch_.decoder[4], arch_.num_classes, 1));

  register_module("encoder", encoder_);
  register_module("decoder", decoder_);
  register_module("head", head_);
}

torch::Tensor Unet2dImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == arch_.in_channels, "Unet2d: expected (B, C, H, W)");
  std::vector<torch::Tensor> skips;
  torch::Tensor y = x;
  for (std::size_t i = 0; i < 5; ++i) {
    if (i > 0) y = F::max_pool2d(y, F::MaxPool2dFuncOptions(2).ceil_mode(true));
    y = leaky(encoder_[i]->as<torch::nn::Conv2d>()->forward(y));
    skips.push_back(y);
  }
  y = leaky(decoder_[0]->as<torch::nn::Conv2d>()->forward(y));
  for (std::size_t j = 1; j < 5; ++j) {
    const auto& skip = skips[4 - j];
    y = torch::cat({upsample_to(y, skip.sizes().slice(2)), skip}, 1);
    y = leaky(decoder_[j]->as<torch::nn::Conv2d>()->forward(y));
  }
  return head_->forward(y);
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace forge
