#include "forge/error.hpp"
#include "forge/v3d_io.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

namespace forge {
namespace {

constexpr std::size_t kNiftiHeaderBytes = 348;

template <typename T>
T read_field(const char* base, std::size_t offset, bool swap) {
  T v;
  std::memcpy(&v, base + offset, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

struct NiftiType {
  torch::Dtype dtype;
  std::size_t bytes;
};

NiftiType nifti_type(int16_t code, const std::string& where) {
  switch (code) {
    case 2: return {torch::kUInt8, 1};
    case 4: return {torch::kInt16, 2};
    case 8: return {torch::kInt32, 4};
    case 16: return {torch::kFloat32, 4};
    case 64: return {torch::kFloat64, 8};
    case 256: return {torch::kInt8, 1};
    default:
      throw IoError(IoErrorKind::DtypeMismatch, where,
                    "unsupported NIfTI datatype " + std::to_string(code));
  }
}

}  // namespace

torch::Tensor read_nifti(const std::filesystem::path& path) {
  const std::string where = path.string();
  if (!std::filesystem::exists(path)) throw IoError(IoErrorKind::MissingFile, where, "");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::MissingFile, where, "cannot open");

  std::array<char, kNiftiHeaderBytes> hdr{};
  in.read(hdr.data(), hdr.size());
  if (in.gcount() != static_cast<std::streamsize>(hdr.size()))
    throw IoError(IoErrorKind::MalformedHeader, where, "header shorter than 348 bytes");

  bool swap = false;
  if (read_field<int32_t>(hdr.data(), 0, false) != 348) {
    if (read_field<int32_t>(hdr.data(), 0, true) != 348)
      throw IoError(IoErrorKind::MalformedHeader, where, "sizeof_hdr is not 348");
    swap = true;
  }
  if (std::memcmp(hdr.data() + 344, "n+1", 3) != 0)
    throw IoError(IoErrorKind::MalformedHeader, where, "not a single-file NIfTI-1 image");

  const auto ndim = read_field<int16_t>(hdr.data(), 40, swap);
  if (ndim < 3 || ndim > 7) throw IoError(IoErrorKind::InvalidShape, where, "dim[0] out of range");
  const int64_t nx = read_field<int16_t>(hdr.data(), 42, swap);
  const int64_t ny = read_field<int16_t>(hdr.data(), 44, swap);
  const int64_t nz = read_field<int16_t>(hdr.data(), 46, swap);
  for (int d = 4; d <= ndim; ++d) {
    if (read_field<int16_t>(hdr.data(), 40 + 2 * d, swap) > 1)
      throw IoError(IoErrorKind::InvalidShape, where, "only 3D images are supported");
  }
  if (nx < 2 || ny < 2 || nz < 2)
    throw IoError(IoErrorKind::InvalidShape, where, "every dimension must be >= 2");

  const auto type = nifti_type(read_field<int16_t>(hdr.data(), 70, swap), where);
  const auto vox_offset = static_cast<std::streamoff>(read_field<float>(hdr.data(), 108, swap));
  in.seekg(std::max<std::streamoff>(vox_offset, kNiftiHeaderBytes));

  auto raw = torch::empty({nz, ny, nx}, type.dtype);
  const auto bytes = static_cast<std::streamsize>(raw.numel() * type.bytes);
  in.read(static_cast<char*>(raw.data_ptr()), bytes);
  if (in.gcount() != bytes)
    throw IoError(IoErrorKind::MalformedPayload, where, "truncated voxel data");
  if (swap && type.bytes > 1) {
    auto* b = static_cast<unsigned char*>(raw.data_ptr());
    for (int64_t i = 0; i < raw.numel(); ++i)
      std::reverse(b + i * type.bytes, b + (i + 1) * type.bytes);
  }
  return raw.to(torch::kFloat64);
}

Volume load_nifti_volume(const std::filesystem::path& path) {
  return Volume::normalized(read_nifti(path).to(torch::kFloat32));
}

LabelMap load_nifti_labels(const std::filesystem::path& path, std::optional<int64_t> num_classes) {
  auto t = torch::round(read_nifti(path)).to(torch::kInt64);
  const auto hi = t.max().item<int64_t>();
  if (t.min().item<int64_t>() < 0 || (num_classes && hi >= *num_classes))
    throw IoError(IoErrorKind::MalformedPayload, path.string(), "label values out of range");
  return LabelMap(t, num_classes.value_or(hi + 1));
}

}  // namespace forge
