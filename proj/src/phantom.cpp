#include "forge/phantom.hpp"

#include "forge/error.hpp"
#include "forge/seeding.hpp"
#include "forge/warp.hpp"

#include <algorithm>
#include <cmath>

namespace F = torch::nn::functional;

namespace forge {
namespace {

// Semi-axes of the outermost shell as a fraction of each grid dimension; small
// enough that background surrounds the head after deformation.
constexpr double kOuterExtent[3] = {0.36, 0.40, 0.38};
// Normalised radius below which the innermost region starts.
constexpr double kInnermostRadius = 0.45;

torch::Tensor gaussian_kernel(double sigma, int64_t radius) {
  auto x = torch::arange(-radius, radius + 1, torch::kFloat64);
  auto k = torch::exp(-0.5 * (x / sigma).pow(2));
  return (k / k.sum()).to(torch::kFloat32);
}

}  // namespace

void PhantomSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("PhantomSpec: " + m); };
  if (grid.depth < 2 || grid.height < 2 || grid.width < 2) fail("grid dims must be >= 2");
  if (num_regions < 2) fail("num_regions must be >= 2");
  if (static_cast<int64_t>(base_intensities.size()) != num_regions)
    fail("need one base intensity per region");
  for (auto v : base_intensities)
    if (!(v >= 0.0 && v <= 1.0)) fail("base intensities must lie in [0, 1]");
  for (std::size_t i = 0; i < base_intensities.size(); ++i)
    for (std::size_t j = i + 1; j < base_intensities.size(); ++j)
      if (std::abs(base_intensities[i] - base_intensities[j]) < 0.05)
        fail("base intensities must differ pairwise by >= 0.05");
  const double min_dim = static_cast<double>(std::min({grid.depth, grid.height, grid.width}));
  if (!(deform_amplitude >= 0.0) || deform_amplitude >= min_dim / 4.0)
    fail("deform_amplitude must be in [0, min(grid)/4)");
  if (!(deform_smoothness > 0.0)) fail("deform_smoothness must be > 0");
  if (!(intensity_smoothness > 0.0)) fail("intensity_smoothness must be > 0");
  if (!(intensity_gain_amplitude >= 0.0) || !(intensity_offset_amplitude >= 0.0))
    fail("intensity amplitudes must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = {{"grid", s.grid.sizes()},
       {"num_regions", s.num_regions},
       {"base_intensities", s.base_intensities},
       {"deform_amplitude", s.deform_amplitude},
       {"deform_smoothness", s.deform_smoothness},
       {"intensity_gain_amplitude", s.intensity_gain_amplitude},
       {"intensity_offset_amplitude", s.intensity_offset_amplitude},
       {"intensity_smoothness", s.intensity_smoothness},
       {"noise_sigma", s.noise_sigma},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  PhantomSpec d;
  const auto g = j.value("grid", d.grid.sizes());
  if (g.size() != 3) throw ConfigError("PhantomSpec: grid must have three entries");
  s.grid = {g[0], g[1], g[2]};
  s.num_regions = j.value("num_regions", d.num_regions);
  s.base_intensities = j.value("base_intensities", d.base_intensities);
  s.deform_amplitude = j.value("deform_amplitude", d.deform_amplitude);
  s.deform_smoothness = j.value("deform_smoothness", d.deform_smoothness);
  s.intensity_gain_amplitude = j.value("intensity_gain_amplitude", d.intensity_gain_amplitude);
  s.intensity_offset_amplitude =
      j.value("intensity_offset_amplitude", d.intensity_offset_amplitude);
  s.intensity_smoothness = j.value("intensity_smoothness", d.intensity_smoothness);
  s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  s.seed = j.value("seed", d.seed);
}

PhantomSubject canonical_phantom(const PhantomSpec& spec) {
  spec.validate();
  const auto& g = spec.grid;
  auto axis_coord = [](int64_t n, double extent) {
    const double centre = 0.5 * static_cast<double>(n - 1);
    return (torch::arange(n, torch::kFloat64) - centre) / (extent * static_cast<double>(n));
  };
  auto z = axis_coord(g.depth, kOuterExtent[0]).view({-1, 1, 1});
  auto y = axis_coord(g.height, kOuterExtent[1]).view({1, -1, 1});
  auto x = axis_coord(g.width, kOuterExtent[2]).view({1, 1, -1});
  auto radius = torch::sqrt(z * z + y * y + x * x);

  // Foreground region k (1-based) occupies radius < threshold_k; thresholds
  // shrink linearly from 1 down to the innermost radius.
  auto labels = torch::zeros(g.sizes(), torch::kInt64);
  const int64_t fg = spec.num_regions - 1;
  for (int64_t k = 1; k <= fg; ++k) {
    const double t = fg == 1 ? 1.0
                             : 1.0 - (1.0 - kInnermostRadius) * static_cast<double>(k - 1) /
                                         static_cast<double>(fg - 1);
    labels.masked_fill_(radius < t, k);
  }
  auto lut = torch::tensor(spec.base_intensities, torch::kFloat64).to(torch::kFloat32);
  auto image = lut.index_select(0, labels.flatten()).view(g.sizes());
  return {Volume(image), LabelMap(labels, spec.num_regions), DisplacementField::zeros(g)};
}

torch::Tensor gaussian_smooth(const torch::Tensor& grid, double sigma) {
  require(grid.dim() == 4, "gaussian_smooth: expected (C, D, H, W)");
  auto y = grid.unsqueeze(0).to(torch::kFloat32);
  const int64_t C = grid.size(0);
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t n = y.size(2 + axis);
    const int64_t radius = std::clamp<int64_t>(static_cast<int64_t>(std::ceil(3.0 * sigma)), 1, n - 1);
    auto k = gaussian_kernel(sigma, radius);
    std::vector<int64_t> shape{C, 1, 1, 1, 1};
    shape[2 + axis] = k.numel();
    auto weight = k.view({-1}).repeat({C}).view(shape);
    std::vector<int64_t> pad(6, 0);  // (W_lo, W_hi, H_lo, H_hi, D_lo, D_hi)
    pad[2 * (2 - axis)] = radius;
    pad[2 * (2 - axis) + 1] = radius;
    y = F::pad(y, F::PadFuncOptions(pad).mode(torch::kReplicate));
    y = F::conv3d(y, weight, F::Conv3dFuncOptions().groups(C));
  }
  return y.squeeze(0);
}

torch::Tensor smooth_random_field(const GridShape& grid, int64_t channels, double amplitude,
                                  double smoothness, uint64_t seed) {
  if (amplitude == 0.0) return torch::zeros({channels, grid.depth, grid.height, grid.width});
  // Noise is drawn on a grid enlarged by the kernel radius and smoothed without
  // padding, so every output voxel sees a full window of independent noise.
  const auto radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * smoothness)));
  auto gen = make_generator(seed);
  auto smooth = torch::randn({1, channels, grid.depth + 2 * radius, grid.height + 2 * radius,
                              grid.width + 2 * radius},
                             gen, torch::kFloat32);
  const auto k = gaussian_kernel(smoothness, radius);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<int64_t> shape{channels, 1, 1, 1, 1};
    shape[2 + axis] = k.numel();
    smooth = F::conv3d(smooth, k.repeat({channels}).view(shape),
                       F::Conv3dFuncOptions().groups(channels));
  }
  smooth = smooth.squeeze(0);
  smooth = smooth - smooth.mean({1, 2, 3}, /*keepdim=*/true);
  const double peak = smooth.abs().max().item<double>();
  return peak > 0.0 ? smooth * (amplitude / peak) : smooth;
}

PhantomSubject generate_member(const PhantomSpec& spec, const PhantomSubject& canonical,
                               uint64_t shape_seed, uint64_t intensity_seed) {
  const auto& g = spec.grid;
  DisplacementField deformation(smooth_random_field(g, 3, spec.deform_amplitude,
                                                    spec.deform_smoothness, shape_seed));
  auto labels = warp_nearest(canonical.labels, deformation);
  auto image = warp_trilinear(canonical.image, deformation).tensor();

  const auto gain = smooth_random_field(g, 1, spec.intensity_gain_amplitude,
                                        spec.intensity_smoothness, derive_seed(intensity_seed, "gain"))[0];
  const auto offset = smooth_random_field(g, 1, spec.intensity_offset_amplitude,
                                          spec.intensity_smoothness,
                                          derive_seed(intensity_seed, "offset"))[0];
  image = image * (1.0 + gain) + offset;
  if (spec.noise_sigma > 0.0) {
    auto gen = make_generator(derive_seed(intensity_seed, "noise"));
    image = image + spec.noise_sigma * torch::randn(g.sizes(), gen, torch::kFloat32);
  }
  return {Volume::clamped(image), std::move(labels), std::move(deformation)};
}

std::vector<PhantomSubject> generate_population(const PhantomSpec& spec, int64_t count) {
  spec.validate();
  if (count < 1) throw ConfigError("generate_population: count must be >= 1");
  const auto canonical = canonical_phantom(spec);
  std::vector<PhantomSubject> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const uint64_t member = derive_seed(spec.seed, "member/" + std::to_string(i));
    out.push_back(generate_member(spec, canonical, derive_seed(member, "shape"),
                                  derive_seed(member, "intensity")));
  }
  return out;
}

}  // namespace forge
