#include "forge/v3d_io.hpp"

#include "forge/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace forge {

static_assert(std::endian::native == std::endian::little,
              "v3d I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'V', '3', 'D', '1'};

// float32 and int32 payloads alike.
constexpr std::size_t kElementBytes = 4;

int64_t channels(V3dDtype dtype) { return dtype == V3dDtype::Field3 ? 3 : 1; }

uint32_t read_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError(IoErrorKind::MissingFile, path.string(), "");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrorKind::MissingFile, path.string(), "cannot open");
  return in;
}

V3dHeader parse_header(std::istream& in, const std::string& where) {
  std::array<char, kV3dHeaderBytes> raw{};
  in.read(raw.data(), raw.size());
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError(IoErrorKind::MalformedHeader, where, "header shorter than 64 bytes");
  if (!std::equal(kMagic.begin(), kMagic.end(), raw.begin()))
    throw IoError(IoErrorKind::MalformedHeader, where, "bad magic");
  const auto code = static_cast<uint8_t>(raw[4]);
  if (code > 2) throw IoError(IoErrorKind::MalformedHeader, where, "unknown dtype code");
  V3dHeader h;
  h.dtype = static_cast<V3dDtype>(code);
  h.shape = {read_u32(raw.data() + 5), read_u32(raw.data() + 9), read_u32(raw.data() + 13)};
  if (h.shape.depth == 0 || h.shape.height == 0 || h.shape.width == 0)
    throw IoError(IoErrorKind::InvalidShape, where, "zero dimension " + h.shape.str());
  return h;
}

void require_dtype(const V3dHeader& h, V3dDtype expected, const std::filesystem::path& path) {
  if (h.dtype != expected)
    throw IoError(IoErrorKind::DtypeMismatch, path.string(),
                  "expected code " + std::to_string(static_cast<int>(expected)) + ", found " +
                      std::to_string(static_cast<int>(h.dtype)));
}

void require_grid_dims(const V3dHeader& h, const std::filesystem::path& path) {
  if (h.shape.depth < 2 || h.shape.height < 2 || h.shape.width < 2)
    throw IoError(IoErrorKind::InvalidShape, path.string(),
                  "every dimension must be >= 2, got " + h.shape.str());
}

}  // namespace

V3dHeader read_v3d_header(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  return parse_header(in, path.string());
}

torch::Tensor read_v3d(const std::filesystem::path& path, V3dHeader* header) {
  auto in = open_for_read(path);
  const V3dHeader h = parse_header(in, path.string());
  if (header) *header = h;

  std::vector<int64_t> sizes;
  if (channels(h.dtype) > 1) sizes.push_back(channels(h.dtype));
  for (auto s : h.shape.sizes()) sizes.push_back(s);
  const auto dtype = h.dtype == V3dDtype::Int32 ? torch::kInt32 : torch::kFloat32;
  auto out = torch::empty(sizes, dtype);
  const auto bytes = static_cast<std::streamsize>(out.numel() * kElementBytes);
  in.read(static_cast<char*>(out.data_ptr()), bytes);
  if (in.gcount() != bytes)
    throw IoError(IoErrorKind::MalformedPayload, path.string(),
                  "expected " + std::to_string(bytes) + " payload bytes, read " +
                      std::to_string(in.gcount()));
  in.peek();
  if (!in.eof()) throw IoError(IoErrorKind::MalformedPayload, path.string(), "trailing bytes");
  return out;
}

void write_v3d(const std::filesystem::path& path, V3dDtype dtype, const torch::Tensor& data) {
  const int64_t lead = channels(dtype) > 1 ? 1 : 0;
  require(data.dim() == 3 + lead, "write_v3d: tensor rank does not match dtype");
  if (lead) require(data.size(0) == 3, "write_v3d: field tensors must have 3 channels");
  const auto shape = GridShape::of(data);
  auto payload = data.detach()
                     .to(dtype == V3dDtype::Int32 ? torch::kInt32 : torch::kFloat32)
                     .contiguous();

  std::array<char, kV3dHeaderBytes> raw{};
  std::copy(kMagic.begin(), kMagic.end(), raw.begin());
  raw[4] = static_cast<char>(dtype);
  const std::array<uint32_t, 3> dims{static_cast<uint32_t>(shape.depth),
                                     static_cast<uint32_t>(shape.height),
                                     static_cast<uint32_t>(shape.width)};
  std::memcpy(raw.data() + 5, dims.data(), sizeof(dims));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "cannot open for writing");
  out.write(raw.data(), raw.size());
  out.write(static_cast<const char*>(payload.data_ptr()),
            static_cast<std::streamsize>(payload.numel() * kElementBytes));
  if (!out) throw IoError(IoErrorKind::WriteFailed, path.string(), "short write");
}

void save_volume(const Volume& volume, const std::filesystem::path& path) {
  write_v3d(path, V3dDtype::Float32, volume.tensor());
}

Volume load_volume(const std::filesystem::path& path) {
  V3dHeader h;
  auto t = read_v3d(path, &h);
  require_dtype(h, V3dDtype::Float32, path);
  require_grid_dims(h, path);
  if (!torch::isfinite(t).all().item<bool>() || t.min().item<float>() < 0.0f ||
      t.max().item<float>() > 1.0f)
    throw IoError(IoErrorKind::MalformedPayload, path.string(),
                  "volume values must be finite and in [0, 1]");
  return Volume(t);
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& path) {
  write_v3d(path, V3dDtype::Int32, labels.tensor());
}

LabelMap load_label_map(const std::filesystem::path& path, std::optional<int64_t> num_classes) {
  V3dHeader h;
  auto t = read_v3d(path, &h);
  require_dtype(h, V3dDtype::Int32, path);
  require_grid_dims(h, path);
  const auto lo = t.min().item<int32_t>();
  const auto hi = t.max().item<int32_t>();
  const int64_t k = num_classes.value_or(static_cast<int64_t>(hi) + 1);
  if (lo < 0 || hi >= k)
    throw IoError(IoErrorKind::MalformedPayload, path.string(), "label values out of range");
  return LabelMap(t, k);
}

void save_displacement_field(const DisplacementField& field, const std::filesystem::path& path) {
  write_v3d(path, V3dDtype::Field3, field.tensor());
}

DisplacementField load_displacement_field(const std::filesystem::path& path) {
  V3dHeader h;
  auto t = read_v3d(path, &h);
  require_dtype(h, V3dDtype::Field3, path);
  require_grid_dims(h, path);
  if (!torch::isfinite(t).all().item<bool>())
    throw IoError(IoErrorKind::MalformedPayload, path.string(), "non-finite displacement");
  return DisplacementField(t);
}

void save_intensity_field(const IntensityField& field, const std::filesystem::path& path) {
  write_v3d(path, V3dDtype::Float32, field.tensor());
}

IntensityField load_intensity_field(const std::filesystem::path& path) {
  V3dHeader h;
  auto t = read_v3d(path, &h);
  require_dtype(h, V3dDtype::Float32, path);
  require_grid_dims(h, path);
  if (!torch::isfinite(t).all().item<bool>())
    throw IoError(IoErrorKind::MalformedPayload, path.string(), "non-finite offset");
  return IntensityField(t);
}

}  // namespace forge
