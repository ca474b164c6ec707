#include "forge/grid.hpp"

#include "forge/error.hpp"

#include <sstream>

namespace forge {
namespace {

torch::Tensor detached_copy(const torch::Tensor& t) {
  return t.detach().clone(at::MemoryFormat::Contiguous);
}

void require_spatial(const torch::Tensor& t, int64_t leading, const char* type) {
  require(t.defined(), std::string(type) + ": undefined tensor");
  require(t.dim() == 3 + leading,
          std::string(type) + ": expected " + std::to_string(3 + leading) + " dimensions, got " +
              std::to_string(t.dim()));
  for (int64_t d = leading; d < t.dim(); ++d) {
    require(t.size(d) >= 2, std::string(type) + ": every spatial dimension must be >= 2");
  }
}

void require_floating_finite(const torch::Tensor& t, const char* type) {
  require(t.is_floating_point(), std::string(type) + ": expected a floating-point tensor");
  require(torch::isfinite(t).all().item<bool>(), std::string(type) + ": non-finite values");
}

}  // namespace

std::string GridShape::str() const {
  std::ostringstream os;
  os << "(" << depth << ", " << height << ", " << width << ")";
  return os.str();
}

GridShape GridShape::of(const torch::Tensor& t) {
  require(t.dim() >= 3, "GridShape: tensor needs at least 3 dimensions");
  const auto n = t.dim();
  return {t.size(n - 3), t.size(n - 2), t.size(n - 1)};
}

Volume::Volume(const torch::Tensor& data) {
  require_spatial(data, 0, "Volume");
  require_floating_finite(data, "Volume");
  require(data.min().item<double>() >= 0.0 && data.max().item<double>() <= 1.0,
          "Volume: values must lie in [0, 1]");
  data_ = detached_copy(data);
}

Volume Volume::normalized(const torch::Tensor& raw) {
  require_spatial(raw, 0, "Volume");
  auto t = raw.is_floating_point() ? raw.detach() : raw.detach().to(torch::kFloat32);
  require_floating_finite(t, "Volume");
  const double lo = t.min().item<double>();
  const double hi = t.max().item<double>();
  if (hi - lo <= 0.0) return Volume(torch::zeros_like(t));
  return Volume(((t - lo) / (hi - lo)).clamp(0.0, 1.0));
}

Volume Volume::clamped(const torch::Tensor& raw) {
  require_spatial(raw, 0, "Volume");
  require_floating_finite(raw, "Volume");
  return Volume(raw.detach().clamp(0.0, 1.0));
}

LabelMap::LabelMap(const torch::Tensor& labels, int64_t num_classes) : num_classes_(num_classes) {
  require_spatial(labels, 0, "LabelMap");
  require(num_classes >= 1, "LabelMap: num_classes must be >= 1");
  require(!labels.is_floating_point() && !labels.is_complex(),
          "LabelMap: expected an integer tensor");
  labels_ = detached_copy(labels.to(torch::kInt64));
  require(labels_.min().item<int64_t>() >= 0 && labels_.max().item<int64_t>() < num_classes,
          "LabelMap: label values must lie in [0, num_classes)");
}

std::vector<int64_t> LabelMap::present_labels() const {
  auto unique = std::get<0>(at::_unique(labels_.flatten(), /*sorted=*/true));
  unique = std::get<0>(unique.sort());
  std::vector<int64_t> out(unique.data_ptr<int64_t>(), unique.data_ptr<int64_t>() + unique.numel());
  return out;
}

DisplacementField::DisplacementField(const torch::Tensor& disp) {
  require_spatial(disp, 1, "DisplacementField");
  require(disp.size(0) == 3, "DisplacementField: leading dimension must be 3");
  require_floating_finite(disp, "DisplacementField");
  disp_ = detached_copy(disp);
}

DisplacementField DisplacementField::zeros(const GridShape& shape, torch::Dtype dtype) {
  return DisplacementField(torch::zeros({3, shape.depth, shape.height, shape.width}, dtype));
}

DisplacementField DisplacementField::constant(const GridShape& shape, double d0, double d1,
                                              double d2, torch::Dtype dtype) {
  auto t = torch::empty({3, shape.depth, shape.height, shape.width}, dtype);
  t[0].fill_(d0);
  t[1].fill_(d1);
  t[2].fill_(d2);
  return DisplacementField(t);
}

IntensityField::IntensityField(const torch::Tensor& offset) {
  require_spatial(offset, 0, "IntensityField");
  require_floating_finite(offset, "IntensityField");
  offset_ = detached_copy(offset);
}

IntensityField IntensityField::zeros(const GridShape& shape, torch::Dtype dtype) {
  return IntensityField(torch::zeros(shape.sizes(), dtype));
}

void require_same_shape(const GridShape& a, const GridShape& b, const std::string& what) {
  if (!(a == b)) throw ContractError(what + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace forge
