#include "forge/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/networks.hpp"
#include "forge/v3d_io.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>

using namespace forge;

namespace {

IoErrorKind io_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.kind();
  }
  FAIL("expected an IoError");
  return IoErrorKind::WriteFailed;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string header(uint8_t dtype, uint32_t d, uint32_t h, uint32_t w) {
  std::string out(64, '\0');
  std::memcpy(out.data(), "V3D1", 4);
  out[4] = static_cast<char>(dtype);
  std::memcpy(out.data() + 5, &d, 4);
  std::memcpy(out.data() + 9, &h, 4);
  std::memcpy(out.data() + 13, &w, 4);
  return out;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("volume, label, field round trips are bit exact") {
  TempDir dir("io");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(1);
  const Volume v(torch::rand({16, 16, 16}, gen));
  save_volume(v, dir / "v.v3d");
  CHECK(torch::equal(load_volume(dir / "v.v3d").tensor(), v.tensor()));

  const LabelMap l(torch::randint(0, 5, {6, 7, 8}, gen, torch::kInt64), 5);
  save_label_map(l, dir / "l.v3d");
  const auto l2 = load_label_map(dir / "l.v3d", 5);
  CHECK(torch::equal(l2.tensor(), l.tensor()));
  CHECK(l2.num_classes() == 5);

  const DisplacementField f(torch::randn({3, 4, 5, 6}, gen));
  save_displacement_field(f, dir / "f.v3d");
  CHECK(torch::equal(load_displacement_field(dir / "f.v3d").tensor(), f.tensor()));

  const IntensityField i(torch::randn({4, 5, 6}, gen));
  save_intensity_field(i, dir / "i.v3d");
  CHECK(torch::equal(load_intensity_field(dir / "i.v3d").tensor(), i.tensor()));
}

TEST_CASE("header layout") {
  TempDir dir("io");
  save_volume(Volume(torch::zeros({2, 3, 4})), dir / "v.v3d");
  const auto bytes = read_bytes(dir / "v.v3d");
  REQUIRE(bytes.size() == 64 + 2 * 3 * 4 * 4);
  CHECK(bytes.substr(0, 4) == "V3D1");
  CHECK(bytes[4] == 0);
  uint32_t dims[3];
  std::memcpy(dims, bytes.data() + 5, 12);
  CHECK(dims[0] == 2);
  CHECK(dims[1] == 3);
  CHECK(dims[2] == 4);
}

TEST_CASE("distinct error kinds") {
  TempDir dir("io");
  CHECK(io_kind([&] { load_volume(dir / "missing.v3d"); }) == IoErrorKind::MissingFile);

  save_volume(Volume(torch::zeros({4, 4, 4})), dir / "v.v3d");
  auto bytes = read_bytes(dir / "v.v3d");
  write_bytes(dir / "trunc.v3d", bytes.substr(0, bytes.size() - 5));
  CHECK(io_kind([&] { load_volume(dir / "trunc.v3d"); }) == IoErrorKind::MalformedPayload);
  write_bytes(dir / "long.v3d", bytes + "xx");
  CHECK(io_kind([&] { load_volume(dir / "long.v3d"); }) == IoErrorKind::MalformedPayload);

  write_bytes(dir / "short.v3d", bytes.substr(0, 20));
  CHECK(io_kind([&] { load_volume(dir / "short.v3d"); }) == IoErrorKind::MalformedHeader);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(dir / "magic.v3d", bad_magic);
  CHECK(io_kind([&] { load_volume(dir / "magic.v3d"); }) == IoErrorKind::MalformedHeader);

  write_bytes(dir / "zero.v3d", header(0, 0, 4, 4));
  CHECK(io_kind([&] { load_volume(dir / "zero.v3d"); }) == IoErrorKind::InvalidShape);

  CHECK(io_kind([&] { load_label_map(dir / "v.v3d"); }) == IoErrorKind::DtypeMismatch);
  CHECK(io_kind([&] { load_displacement_field(dir / "v.v3d"); }) == IoErrorKind::DtypeMismatch);

  std::string payload(4 * 8, '\0');
  const float big = 2.0f;
  std::memcpy(payload.data(), &big, 4);
  write_bytes(dir / "range.v3d", header(0, 2, 2, 2) + payload);
  CHECK(io_kind([&] { load_volume(dir / "range.v3d"); }) == IoErrorKind::MalformedPayload);
}

TEST_CASE("NIfTI-1 int16 volume is read and min-max normalised") {
  TempDir dir("nii");
  std::string hdr(352, '\0');
  const int32_t sizeof_hdr = 348;
  std::memcpy(hdr.data(), &sizeof_hdr, 4);
  const int16_t dim[8] = {3, 4, 3, 2, 1, 1, 1, 1};  // nx=4, ny=3, nz=2
  std::memcpy(hdr.data() + 40, dim, sizeof dim);
  const int16_t datatype = 4, bitpix = 16;
  std::memcpy(hdr.data() + 70, &datatype, 2);
  std::memcpy(hdr.data() + 72, &bitpix, 2);
  const float vox_offset = 352.0f;
  std::memcpy(hdr.data() + 108, &vox_offset, 4);
  std::memcpy(hdr.data() + 344, "n+1", 4);
  std::string payload(2 * 24, '\0');
  for (int16_t i = 0; i < 24; ++i) std::memcpy(payload.data() + 2 * i, &i, 2);
  write_bytes(dir / "a.nii", hdr + payload);

  const auto raw = read_nifti(dir / "a.nii");
  CHECK(raw.sizes() == torch::IntArrayRef({2, 3, 4}));
  CHECK(raw[1][2][3].item<double>() == 23.0);
  CHECK(raw[0][1][0].item<double>() == 4.0);
  const auto v = load_nifti_volume(dir / "a.nii");
  CHECK(v.tensor().max().item<float>() == 1.0f);
  CHECK(v.tensor().min().item<float>() == 0.0f);
  const auto l = load_nifti_labels(dir / "a.nii");
  CHECK(l.num_classes() == 24);
}

TEST_CASE("checkpoint round trip restores every parameter") {
  TempDir dir("ckpt");
  torch::manual_seed(3);
  Unet2d a(Unet2dArch{1, 3, {2, 2, 2, 2, 2}, {2, 2, 2, 2, 2}});
  save_checkpoint(dir / "m.ckpt", {{"kind", "test"}}, *a);
  CHECK(read_checkpoint_meta(dir / "m.ckpt").at("kind") == "test");
  torch::manual_seed(4);
  Unet2d b(Unet2dArch{1, 3, {2, 2, 2, 2, 2}, {2, 2, 2, 2, 2}});
  load_checkpoint_tensors(dir / "m.ckpt", *b);
  const auto pa = a->named_parameters();
  const auto pb = b->named_parameters();
  for (const auto& item : pa) CHECK(torch::equal(item.value(), pb[item.key()]));

  Unet2d other(Unet2dArch{1, 3, {4, 2, 2, 2, 2}, {2, 2, 2, 2, 2}});
  CHECK_THROWS(load_checkpoint_tensors(dir / "m.ckpt", *other));
}

}
