#include "forge/error.hpp"
#include "forge/phantom.hpp"
#include "forge/synthesis.hpp"
#include "forge/warp.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace forge;

namespace {

PhantomSpec fixture_spec() {
  PhantomSpec spec;
  spec.grid = {16, 16, 16};
  spec.deform_amplitude = 1.5;
  spec.deform_smoothness = 3.0;
  spec.noise_sigma = 0.0;
  spec.intensity_gain_amplitude = 0.0;
  spec.intensity_offset_amplitude = 0.0;
  return spec;
}

struct Fixture {
  PhantomSpec spec = fixture_spec();
  PhantomSubject atlas = canonical_phantom(spec);

  std::shared_ptr<SampleSources> sources(std::size_t n_shape, std::size_t n_intensity) const {
    auto s = std::make_shared<SampleSources>(
        SampleSources{atlas.image, atlas.labels, {}, {}, nullptr, nullptr, 10.0, false});
    for (std::size_t i = 0; i < n_shape; ++i)
      s->shape_fields.emplace_back(smooth_random_field(spec.grid, 3, 2.0, 3.0, 100 + i));
    for (std::size_t i = 0; i < n_intensity; ++i)
      s->intensity_fields.emplace_back(smooth_random_field(spec.grid, 1, 0.1, 4.0, 200 + i)[0]);
    return s;
  }
};

VaeConfig tiny_vae() {
  auto c = VaeConfig::desk_preset();
  c.iterations = 0;
  c.latent_dim = 16;
  c.widths = {4, 4};
  c.group_norm_groups = 2;
  return c;
}

}  // namespace

TEST_SUITE("synthesis") {

TEST_CASE("identity deformation returns the atlas") {
  Fixture f;
  const auto s = synthesize(f.atlas.image, f.atlas.labels, DisplacementField::zeros(f.spec.grid));
  CHECK(torch::equal(s.image.tensor(), f.atlas.image.tensor()));
  CHECK(torch::equal(s.labels.tensor(), f.atlas.labels.tensor()));
}

TEST_CASE("integer shifts move image and labels together") {
  Fixture f;
  const auto s = synthesize(f.atlas.image, f.atlas.labels, DisplacementField::constant(f.spec.grid, 2, -1, 1));
  // every voxel's intensity is still the base intensity of its warped label
  auto lut = torch::tensor(f.spec.base_intensities, torch::kFloat32);
  const auto expected = lut.index_select(0, s.labels.tensor().flatten()).view(s.image.tensor().sizes());
  CHECK((expected - s.image.tensor()).abs().max().item<float>() < 1e-6f);
  for (int64_t z = 0; z < 12; ++z)
    for (int64_t y = 1; y < 16; ++y)
      for (int64_t x = 0; x < 15; ++x)
        REQUIRE(s.labels.tensor()[z][y][x].item<int64_t>() ==
                f.atlas.labels.tensor()[z + 2][y - 1][x + 1].item<int64_t>());
}

TEST_CASE("intensity offsets never change the labels") {
  Fixture f;
  const auto s = synthesize(f.atlas.image, f.atlas.labels, DisplacementField::zeros(f.spec.grid),
                            IntensityField(torch::full({16, 16, 16}, 0.1)));
  CHECK(torch::equal(s.labels.tensor(), f.atlas.labels.tensor()));
  const auto want = (f.atlas.image.tensor() + 0.1).clamp(0.0, 1.0);
  CHECK((s.image.tensor() - want).abs().max().item<float>() < 1e-6f);
  CHECK_THROWS_AS(synthesize(f.atlas.image, f.atlas.labels, DisplacementField::zeros({16, 16, 15})),
                  ContractError);
}

TEST_CASE("registration streams draw fields uniformly") {
  Fixture f;
  SampleStream stream(AugmentationMode::RegShapeOnly, f.sources(3, 0), 17);
  std::map<std::string, int> counts;
  for (int i = 0; i < 300; ++i) ++counts[stream.next().provenance.shape_source];
  REQUIRE(counts.size() == 3);
  for (const auto& [name, n] : counts) {
    CHECK(n >= 60);
    CHECK(n <= 140);
  }
}

TEST_CASE("shape and intensity pairs cover every combination") {
  Fixture f;
  SampleStream stream(AugmentationMode::RegShapeIntensity, f.sources(2, 2), 5);
  std::set<std::pair<std::string, std::string>> seen;
  for (int i = 0; i < 400; ++i) {
    const auto p = stream.next().provenance;
    seen.insert({p.shape_source, p.intensity_source});
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("the atlas itself is drawn about once in N + 1") {
  Fixture f;
  auto sources = f.sources(3, 0);
  sources->include_identity = true;
  SampleStream stream(AugmentationMode::RegShapeOnly, sources, 8);
  int identity = 0;
  for (int i = 0; i < 400; ++i) identity += stream.next().provenance.shape_source == "identity";
  CHECK(identity >= 60);   // expected 100
  CHECK(identity <= 140);
}

TEST_CASE("VAE streams are deterministic per seed") {
  Fixture f;
  auto sources = f.sources(2, 0);
  sources->shape_vae = std::make_shared<TrainedVae>(make_vae(VaeKind::Shape, f.spec.grid, tiny_vae()));
  sources->intensity_vae = std::make_shared<TrainedVae>(make_vae(VaeKind::Intensity, f.spec.grid, tiny_vae()));
  SampleStream a(AugmentationMode::VaeShapeIntensity, sources, 99);
  SampleStream b(AugmentationMode::VaeShapeIntensity, sources, 99);
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next();
    const auto y = b.next();
    CHECK(torch::equal(x.image.tensor(), y.image.tensor()));
    CHECK(torch::equal(x.labels.tensor(), y.labels.tensor()));
    CHECK(x.provenance.draw_index == i);
  }
}

TEST_CASE("missing sources are configuration errors") {
  Fixture f;
  CHECK_THROWS_AS(SampleStream(AugmentationMode::RegShapeOnly, f.sources(0, 0), 1), ConfigError);
  CHECK_THROWS_AS(SampleStream(AugmentationMode::RegShapeIntensity, f.sources(2, 0), 1), ConfigError);
  CHECK_THROWS_AS(SampleStream(AugmentationMode::VaeShapeOnly, f.sources(2, 0), 1), ConfigError);
  CHECK_THROWS_AS(SampleStream(AugmentationMode::RegShapeOnly, nullptr, 1), ConfigError);
  CHECK_THROWS_AS(augmentation_mode_from("bogus"), ConfigError);
  CHECK(augmentation_mode_from("vae_shape_only") == AugmentationMode::VaeShapeOnly);
}

TEST_CASE("samples keep atlas labels, stay in range and agree with one-hot warps") {
  Fixture f;
  SampleStream stream(AugmentationMode::RegShapeIntensity, f.sources(4, 4), 3);
  const auto atlas_labels = f.atlas.labels.present_labels();
  const auto k = f.atlas.labels.num_classes();
  const auto onehot = torch::one_hot(f.atlas.labels.tensor(), k).permute({3, 0, 1, 2}).to(torch::kFloat32);
  for (int i = 0; i < 20; ++i) {
    const auto s = stream.next();
    for (auto l : s.labels.present_labels())
      CHECK(std::find(atlas_labels.begin(), atlas_labels.end(), l) != atlas_labels.end());
    CHECK(s.image.tensor().min().item<float>() >= 0.0f);
    CHECK(s.image.tensor().max().item<float>() <= 1.0f);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const DisplacementField s(smooth_random_field(f.spec.grid, 3, 2.0, 3.0, 100 + i));
    const auto warped = warp_trilinear(onehot.unsqueeze(1), s.tensor().unsqueeze(0).expand({k, 3, 16, 16, 16}));
    const auto labels = warp_nearest(f.atlas.labels, s).tensor();
    double agree = 0.0;
    for (int64_t c = 0; c < k; ++c)
      agree += ((warped[c][0] > 0.5) == (labels == c)).to(torch::kFloat64).mean().item<double>();
    CHECK(agree / static_cast<double>(k) >= 0.95);
  }
}

}
