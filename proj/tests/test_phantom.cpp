#include "forge/error.hpp"
#include "forge/phantom.hpp"
#include "forge/warp.hpp"

#include <doctest.h>

using namespace forge;

TEST_SUITE("phantom") {

TEST_CASE("zero perturbation reproduces the canonical phantom") {
  PhantomSpec spec;
  spec.deform_amplitude = 0.0;
  spec.noise_sigma = 0.0;
  spec.intensity_gain_amplitude = 0.0;
  spec.intensity_offset_amplitude = 0.0;
  const auto canonical = canonical_phantom(spec);
  const auto members = generate_population(spec, 1);
  REQUIRE(members.size() == 1);
  CHECK(torch::equal(members[0].image.tensor(), canonical.image.tensor()));
  CHECK(torch::equal(members[0].labels.tensor(), canonical.labels.tensor()));
}

TEST_CASE("generation is deterministic per seed") {
  PhantomSpec spec;
  spec.seed = 42;
  const auto a = generate_population(spec, 3);
  const auto b = generate_population(spec, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(torch::equal(a[i].image.tensor(), b[i].image.tensor()));
    CHECK(torch::equal(a[i].labels.tensor(), b[i].labels.tensor()));
  }
  spec.seed = 43;
  const auto c = generate_population(spec, 1);
  CHECK_FALSE(torch::equal(a[0].image.tensor(), c[0].image.tensor()));
}

TEST_CASE("every member has exactly num_regions labels and background on the border") {
  PhantomSpec spec;
  const auto members = generate_population(spec, 6);
  for (const auto& m : members) {
    CHECK(m.labels.present_labels() == std::vector<int64_t>{0, 1, 2, 3});
    const auto& l = m.labels.tensor();
    CHECK(l[0].eq(0).all().item<bool>());
    CHECK(l.select(2, 31).eq(0).all().item<bool>());
  }
  // members differ in shape, not just intensity
  CHECK_FALSE(torch::equal(members[0].labels.tensor(), members[1].labels.tensor()));
}

TEST_CASE("intensity seed alone changes the image") {
  PhantomSpec spec;
  const auto canonical = canonical_phantom(spec);
  const auto a = generate_member(spec, canonical, 7, 100);
  const auto b = generate_member(spec, canonical, 7, 101);
  CHECK(torch::equal(a.labels.tensor(), b.labels.tensor()));
  CHECK((a.image.tensor() - b.image.tensor()).abs().mean().item<double>() > 0.0);
}

TEST_CASE("deformations are smooth relative to their amplitude") {
  PhantomSpec spec;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    const auto f = smooth_random_field(spec.grid, 3, spec.deform_amplitude, spec.deform_smoothness, seed);
    CHECK(f.abs().max().item<double>() == doctest::Approx(spec.deform_amplitude));
    const auto jac = spatial_gradient(f);  // (3, 3, D, H, W)
    const double mean_norm = jac.pow(2).sum({0, 1}).sqrt().mean().item<double>();
    CHECK(mean_norm <= 3.0 * spec.deform_amplitude / spec.deform_smoothness);
  }
}

TEST_CASE("invalid specs are configuration errors") {
  PhantomSpec spec;
  spec.base_intensities = {0.1, 0.12, 0.6, 0.9};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.deform_amplitude = 8.0;  // 32 / 4
  CHECK_THROWS_AS(generate_population(spec, 1), ConfigError);
  spec = {};
  spec.num_regions = 1;
  spec.base_intensities = {0.5};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  CHECK_THROWS_AS(generate_population(spec, 0), ConfigError);
}

}
