#include "forge/error.hpp"
#include "forge/intensity_alignment.hpp"
#include "forge/phantom.hpp"
#include "forge/warp.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace forge;

namespace {

torch::Tensor rand01(std::vector<int64_t> shape, uint64_t seed, torch::Dtype dtype = torch::kFloat64) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand(shape, gen, torch::TensorOptions().dtype(dtype));
}

/// Voxels with a differently labelled 6-neighbour, by direct scan.
std::vector<uint8_t> boundary_scan(const torch::Tensor& labels) {
  const auto g = oracle::dims_of(labels);
  const auto l = labels.contiguous();
  const auto* p = l.data_ptr<int64_t>();
  std::vector<uint8_t> out(g.size(), 0);
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        const int64_t nb[6][3] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                  {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
        for (const auto& n : nb) {
          if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= g.d || n[1] >= g.h || n[2] >= g.w) continue;
          if (p[g.at(n[0], n[1], n[2])] != p[g.at(z, y, x)]) out[g.at(z, y, x)] = 1;
        }
      }
  return out;
}

std::vector<uint8_t> dilate_scan(const std::vector<uint8_t>& m, const oracle::Dims& g) {
  auto out = m;
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        if (!m[g.at(z, y, x)]) continue;
        const int64_t nb[6][3] = {{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                  {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}};
        for (const auto& n : nb)
          if (n[0] >= 0 && n[1] >= 0 && n[2] >= 0 && n[0] < g.d && n[1] < g.h && n[2] < g.w)
            out[g.at(n[0], n[1], n[2])] = 1;
      }
  return out;
}

int64_t count(const std::vector<uint8_t>& m) { return std::count(m.begin(), m.end(), uint8_t{1}); }

IntensityAlignConfig small_config(int64_t epochs) {
  auto c = IntensityAlignConfig::desk_preset();
  c.epochs = epochs;
  c.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_SUITE("intensity") {

TEST_CASE("contour mask: single label, half spaces, nested phantom") {
  CHECK(contour_mask(LabelMap(torch::zeros({5, 5, 5}, torch::kInt64), 1)).count() == 0);

  auto half = torch::zeros({4, 5, 8}, torch::kInt64);
  half.narrow(2, 4, 4).fill_(1);  // split between x = 3 and x = 4
  const auto m0 = contour_mask(LabelMap(half, 2), 0).tensor();
  for (int64_t x = 0; x < 8; ++x)
    CHECK(m0.select(2, x).eq(x == 3 || x == 4 ? 1 : 0).all().item<bool>());
  const auto m1 = contour_mask(LabelMap(half, 2), 1).tensor();
  for (int64_t x = 0; x < 8; ++x)
    CHECK(m1.select(2, x).eq(x >= 2 && x <= 5 ? 1 : 0).all().item<bool>());

  PhantomSpec spec;
  spec.grid = {20, 20, 20};
  const auto labels = generate_population(spec, 1)[0].labels;
  const auto scan = boundary_scan(labels.tensor());
  CHECK(contour_mask(labels, 0).count() == count(scan));
  CHECK(contour_mask(labels, 1).count() == count(dilate_scan(scan, {20, 20, 20})));
  CHECK(contour_mask(labels, 2).count() ==
        count(dilate_scan(dilate_scan(scan, {20, 20, 20}), {20, 20, 20})));
}

TEST_CASE("intensity losses: closed forms") {
  const Volume atlas(rand01({6, 6, 6}, 1).to(torch::kFloat32));
  const auto none = ContourMask(torch::zeros({6, 6, 6}, torch::kUInt8));
  const auto zero = intensity_losses(atlas, IntensityField::zeros({6, 6, 6}), DisplacementField::zeros({6, 6, 6}),
                                     atlas, none, 0.02);
  CHECK(zero.similarity == 0.0);
  CHECK(zero.regularity == 0.0);
  CHECK(zero.total == 0.0);

  const auto c = intensity_losses(atlas, IntensityField(torch::full({6, 6, 6}, 0.1)),
                                  DisplacementField::zeros({6, 6, 6}), atlas, none, 0.02);
  CHECK(c.similarity == doctest::Approx(0.01 * 216).epsilon(1e-6));
  CHECK(c.regularity == 0.0);
  CHECK(c.total == doctest::Approx(c.similarity + 0.02 * c.regularity));
}

TEST_CASE("offset regulariser matches brute force and shrinks under the mask") {
  auto step = torch::zeros({6, 6, 6}, torch::kFloat64);
  step.narrow(0, 2, 2).narrow(1, 1, 3).narrow(2, 0, 4).fill_(0.3);
  const Volume atlas(torch::full({6, 6, 6}, 0.5));
  const auto none = ContourMask(torch::zeros({6, 6, 6}, torch::kUInt8));
  const auto unmasked = intensity_losses(atlas, IntensityField(step), DisplacementField::zeros({6, 6, 6}),
                                         atlas, none, 1.0);
  const std::vector<double> zeros(216, 0.0);
  CHECK(unmasked.regularity ==
        doctest::Approx(oracle::masked_l1_gradient(oracle::to_vec(step), zeros, {6, 6, 6})).epsilon(1e-12));

  const auto r = torch::rand({6, 6, 6}, at::make_generator<at::CPUGeneratorImpl>(2),
                             torch::TensorOptions().dtype(torch::kFloat64));
  const auto mask = ContourMask((r > 0.6).to(torch::kUInt8));
  const auto masked = intensity_losses(atlas, IntensityField(step), DisplacementField::zeros({6, 6, 6}),
                                       atlas, mask, 1.0);
  CHECK(masked.regularity ==
        doctest::Approx(oracle::masked_l1_gradient(oracle::to_vec(step), oracle::to_vec(mask.tensor()),
                                                   {6, 6, 6}))
            .epsilon(1e-12));
  CHECK(masked.regularity <= unmasked.regularity);

  const auto shift = DisplacementField::constant({6, 6, 6}, 0.3, -0.2, 0.7);
  const auto target = Volume(rand01({6, 6, 6}, 3).to(torch::kFloat32));
  const auto full = intensity_losses(atlas, IntensityField(step), shift, target, mask, 0.02);
  const auto moved = oracle::warp(oracle::to_vec(atlas.tensor().to(torch::kFloat64) + step),
                                  oracle::to_vec(shift.tensor()), {6, 6, 6});
  const auto goal = oracle::to_vec(target.tensor());
  double sim = 0.0;
  for (std::size_t i = 0; i < goal.size(); ++i) sim += (moved[i] - goal[i]) * (moved[i] - goal[i]);
  CHECK(full.similarity == doctest::Approx(sim).epsilon(1e-9));
}

TEST_CASE("intensity loss gradients match finite differences") {
  const auto atlas = rand01({1, 1, 6, 6, 6}, 4);
  const auto target = rand01({1, 1, 6, 6, 6}, 5);
  const auto field = 1.25 + 0.5 * rand01({1, 3, 6, 6, 6}, 6);
  const auto mask = (rand01({6, 6, 6}, 7) > 0.7).to(torch::kUInt8);
  const auto offset = 0.2 * rand01({1, 1, 6, 6, 6}, 8);

  auto total = [&](const torch::Tensor& i) {
    return intensity_losses(atlas, i, field, target, mask, 0.02).total;
  };
  auto sim = [&](const torch::Tensor& i) {
    return intensity_losses(atlas, i, field, target, mask, 0.02).similarity;
  };
  auto reg = [&](const torch::Tensor& i) {
    return intensity_losses(atlas, i, field, target, mask, 0.02).regularity;
  };
  CHECK(oracle::check_gradient(total, offset, 1e-7).rel_error < 1e-5);
  CHECK(oracle::check_gradient(sim, offset, 1e-6).rel_error < 1e-5);
  // offsets drawn continuous, so no difference sits exactly on the |.| kink
  CHECK(oracle::check_gradient(reg, offset, 1e-7).rel_error < 1e-5);

  auto total32 = [&](const torch::Tensor& i) {
    return intensity_losses(atlas.to(torch::kFloat32), i, field.to(torch::kFloat32),
                            target.to(torch::kFloat32), mask, 0.02)
        .total;
  };
  CHECK(oracle::check_gradient(total32, offset.to(torch::kFloat32), 1e-3).rel_error < 1e-2);
}

TEST_CASE("an untrained model predicts a zero offset") {
  const Volume atlas(rand01({16, 16, 16}, 9).to(torch::kFloat32));
  const auto mask = ContourMask(torch::zeros({16, 16, 16}, torch::kUInt8));
  const std::vector<Volume> vols{atlas};
  const std::vector<DisplacementField> fields{DisplacementField::zeros({16, 16, 16})};
  const auto model = train_intensity(atlas, vols, fields, vols, mask, small_config(0));
  CHECK(model.trace.empty());
  CHECK(predict_intensity(model, atlas, atlas).tensor().abs().max().item<float>() == 0.0f);
  CHECK_THROWS_AS(train_intensity(atlas, vols, {}, vols, mask, small_config(1)), ConfigError);
}

TEST_CASE("self-alignment learns a near-zero offset") {
  PhantomSpec spec;
  spec.grid = {16, 16, 16};
  spec.deform_amplitude = 1.5;
  spec.deform_smoothness = 3.0;
  const auto m = generate_population(spec, 1)[0];
  const std::vector<Volume> vols{m.image};
  const std::vector<DisplacementField> fields{DisplacementField::zeros(spec.grid)};
  const auto model = train_intensity(m.image, vols, fields, vols, contour_mask(m.labels), small_config(20));
  CHECK(predict_intensity(model, m.image, m.image).tensor().abs().mean().item<double>() < 0.01);
}

TEST_CASE("a global brightness change is recovered" * doctest::timeout(300)) {
  PhantomSpec spec;
  spec.grid = {16, 16, 16};
  spec.deform_amplitude = 0.0;
  spec.seed = 9;
  const auto members = generate_population(spec, 5);
  const auto& atlas = members[0];
  std::vector<Volume> inputs, targets;
  std::vector<DisplacementField> fields;
  for (std::size_t i = 1; i < members.size(); ++i) {
    auto t = members[i].image.tensor();
    if (i == 2) t = t + 0.2;
    targets.push_back(Volume::clamped(t));
    inputs.push_back(targets.back());  // no deformation: already in atlas space
    fields.push_back(DisplacementField::zeros(spec.grid));
  }
  const auto model = train_intensity(atlas.image, inputs, fields, targets, contour_mask(atlas.labels),
                                     small_config(150));
  const double brightened = predict_intensity(model, atlas.image, inputs[1]).tensor().mean().item<double>();
  CHECK(brightened >= 0.1);
  CHECK(brightened <= 0.3);
}

}
