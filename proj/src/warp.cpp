#include "forge/warp.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace forge {
namespace {

using torch::autograd::AutogradContext;
using torch::autograd::tensor_list;

struct Corner {
  int64_t lo;
  int64_t hi;
  double frac;     // weight of `hi`
  bool inside;     // false when the sample position was clamped
};

inline Corner locate(double p, int64_t size) {
  const double top = static_cast<double>(size - 1);
  Corner c{};
  c.inside = p >= 0.0 && p <= top;
  p = std::clamp(p, 0.0, top);
  c.lo = static_cast<int64_t>(std::floor(p));
  c.hi = std::min(c.lo + 1, size - 1);
  c.frac = p - static_cast<double>(c.lo);
  return c;
}

void check_warp_args(const torch::Tensor& moving, const torch::Tensor& field) {
  require(moving.dim() == 5, "warp: moving must be (N, C, D, H, W)");
  require(field.dim() == 5 && field.size(1) == 3, "warp: field must be (N, 3, D, H, W)");
  require(moving.size(0) == field.size(0), "warp: batch size mismatch");
  require_same_shape(GridShape::of(moving), GridShape::of(field), "warp");
}

template <typename scalar_t>
void trilinear_forward_kernel(const torch::Tensor& moving, const torch::Tensor& field,
                              torch::Tensor& out) {
  const auto N = moving.size(0), C = moving.size(1);
  const auto D = moving.size(2), H = moving.size(3), W = moving.size(4);
  const int64_t vox = D * H * W;
  const scalar_t* m = moving.data_ptr<scalar_t>();
  const scalar_t* f = field.data_ptr<scalar_t>();
  scalar_t* o = out.data_ptr<scalar_t>();

  for (int64_t n = 0; n < N; ++n) {
    const scalar_t* fn = f + n * 3 * vox;
    for (int64_t d = 0; d < D; ++d)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const int64_t v = (d * H + h) * W + w;
          const Corner z = locate(d + static_cast<double>(fn[v]), D);
          const Corner y = locate(h + static_cast<double>(fn[vox + v]), H);
          const Corner x = locate(w + static_cast<double>(fn[2 * vox + v]), W);
          const std::array<int64_t, 2> zi{z.lo, z.hi}, yi{y.lo, y.hi}, xi{x.lo, x.hi};
          const std::array<double, 2> zw{1.0 - z.frac, z.frac}, yw{1.0 - y.frac, y.frac},
              xw{1.0 - x.frac, x.frac};
          for (int64_t c = 0; c < C; ++c) {
            const scalar_t* mc = m + (n * C + c) * vox;
            double acc = 0.0;
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e)
                  acc += zw[a] * yw[b] * xw[e] * mc[(zi[a] * H + yi[b]) * W + xi[e]];
            o[(n * C + c) * vox + v] = static_cast<scalar_t>(acc);
          }
        }
  }
}

template <typename scalar_t>
void trilinear_backward_kernel(const torch::Tensor& moving, const torch::Tensor& field,
                               const torch::Tensor& grad_out, torch::Tensor* grad_moving,
                               torch::Tensor* grad_field) {
  const auto N = moving.size(0), C = moving.size(1);
  const auto D = moving.size(2), H = moving.size(3), W = moving.size(4);
  const int64_t vox = D * H * W;
  const scalar_t* m = moving.data_ptr<scalar_t>();
  const scalar_t* f = field.data_ptr<scalar_t>();
  const scalar_t* g = grad_out.data_ptr<scalar_t>();
  scalar_t* gm = grad_moving ? grad_moving->data_ptr<scalar_t>() : nullptr;
  scalar_t* gf = grad_field ? grad_field->data_ptr<scalar_t>() : nullptr;

  for (int64_t n = 0; n < N; ++n) {
    const scalar_t* fn = f + n * 3 * vox;
    for (int64_t d = 0; d < D; ++d)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          const int64_t v = (d * H + h) * W + w;
          const Corner z = locate(d + static_cast<double>(fn[v]), D);
          const Corner y = locate(h + static_cast<double>(fn[vox + v]), H);
          const Corner x = locate(w + static_cast<double>(fn[2 * vox + v]), W);
          const std::array<int64_t, 2> zi{z.lo, z.hi}, yi{y.lo, y.hi}, xi{x.lo, x.hi};
          const std::array<double, 2> zw{1.0 - z.frac, z.frac}, yw{1.0 - y.frac, y.frac},
              xw{1.0 - x.frac, x.frac};
          constexpr std::array<double, 2> dw{-1.0, 1.0};
          double dz = 0.0, dy = 0.0, dx = 0.0;
          for (int64_t c = 0; c < C; ++c) {
            const double go = g[(n * C + c) * vox + v];
            const scalar_t* mc = m + (n * C + c) * vox;
            scalar_t* gmc = gm ? gm + (n * C + c) * vox : nullptr;
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e) {
                  const int64_t idx = (zi[a] * H + yi[b]) * W + xi[e];
                  if (gmc) gmc[idx] += static_cast<scalar_t>(go * zw[a] * yw[b] * xw[e]);
                  if (gf) {
                    const double val = go * mc[idx];
                    dz += val * dw[a] * yw[b] * xw[e];
                    dy += val * zw[a] * dw[b] * xw[e];
                    dx += val * zw[a] * yw[b] * dw[e];
                  }
                }
          }
          if (gf) {
            scalar_t* gfn = gf + n * 3 * vox;
            gfn[v] = static_cast<scalar_t>(z.inside ? dz : 0.0);
            gfn[vox + v] = static_cast<scalar_t>(y.inside ? dy : 0.0);
            gfn[2 * vox + v] = static_cast<scalar_t>(x.inside ? dx : 0.0);
          }
        }
  }
}

struct TrilinearWarp : public torch::autograd::Function<TrilinearWarp> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor moving, torch::Tensor field) {
    moving = moving.contiguous();
    field = field.contiguous();
    ctx->save_for_backward({moving, field});
    auto out = torch::empty_like(moving);
    AT_DISPATCH_FLOATING_TYPES(moving.scalar_type(), "warp_trilinear_forward", [&] {
      trilinear_forward_kernel<scalar_t>(moving, field, out);
    });
    return out;
  }

  static tensor_list backward(AutogradContext* ctx, tensor_list grad_outputs) {
    const auto saved = ctx->get_saved_variables();
    const auto& moving = saved[0];
    const auto& field = saved[1];
    auto grad_out = grad_outputs[0].contiguous();
    torch::Tensor grad_moving, grad_field;
    if (ctx->needs_input_grad(0)) grad_moving = torch::zeros_like(moving);
    if (ctx->needs_input_grad(1)) grad_field = torch::zeros_like(field);
    AT_DISPATCH_FLOATING_TYPES(moving.scalar_type(), "warp_trilinear_backward", [&] {
      trilinear_backward_kernel<scalar_t>(moving, field, grad_out,
                                          grad_moving.defined() ? &grad_moving : nullptr,
                                          grad_field.defined() ? &grad_field : nullptr);
    });
    return {grad_moving, grad_field};
  }
};

torch::Tensor round_half_away(const torch::Tensor& x) {
  return torch::sign(x) * torch::floor(torch::abs(x) + 0.5);
}

}  // namespace

torch::Tensor warp_trilinear(const torch::Tensor& moving, const torch::Tensor& field) {
  check_warp_args(moving, field);
  require(moving.is_floating_point() && moving.scalar_type() == field.scalar_type(),
          "warp_trilinear: moving and field must share a floating dtype");
  return TrilinearWarp::apply(moving, field);
}

Volume warp_trilinear(const Volume& moving, const DisplacementField& field) {
  require_same_shape(moving.shape(), field.shape(), "warp_trilinear");
  auto f = field.tensor().to(moving.tensor().scalar_type()).unsqueeze(0);
  auto out = warp_trilinear(moving.tensor().unsqueeze(0).unsqueeze(0), f);
  return Volume::clamped(out[0][0]);
}

torch::Tensor warp_nearest(const torch::Tensor& moving, const torch::Tensor& field) {
  check_warp_args(moving, field);
  const auto g = GridShape::of(moving);
  const auto N = moving.size(0), C = moving.size(1);
  torch::NoGradGuard no_grad;
  auto opts = field.options().dtype(torch::kFloat64);
  auto f = field.detach().to(torch::kFloat64);
  auto zz = torch::arange(g.depth, opts).view({1, g.depth, 1, 1});
  auto yy = torch::arange(g.height, opts).view({1, 1, g.height, 1});
  auto xx = torch::arange(g.width, opts).view({1, 1, 1, g.width});
  auto iz = round_half_away(zz + f.select(1, 0)).clamp(0, g.depth - 1).to(torch::kInt64);
  auto iy = round_half_away(yy + f.select(1, 1)).clamp(0, g.height - 1).to(torch::kInt64);
  auto ix = round_half_away(xx + f.select(1, 2)).clamp(0, g.width - 1).to(torch::kInt64);
  auto flat = ((iz * g.height + iy) * g.width + ix).view({N, 1, g.voxels()}).expand({N, C, g.voxels()});
  auto src = moving.reshape({N, C, g.voxels()});
  return src.gather(2, flat).view(moving.sizes());
}

LabelMap warp_nearest(const LabelMap& moving, const DisplacementField& field) {
  require_same_shape(moving.shape(), field.shape(), "warp_nearest");
  auto out = warp_nearest(moving.tensor().unsqueeze(0).unsqueeze(0), field.tensor().unsqueeze(0));
  return LabelMap(out[0][0], moving.num_classes());
}

torch::Tensor spatial_gradient(const torch::Tensor& field) {
  require(field.dim() >= 4, "spatial_gradient: expected (..., C, D, H, W)");
  std::vector<torch::Tensor> parts;
  parts.reserve(3);
  for (int64_t axis = field.dim() - 3; axis < field.dim(); ++axis) {
    const auto n = field.size(axis);
    require(n >= 2, "spatial_gradient: every spatial dimension must be >= 2");
    auto diff = field.narrow(axis, 1, n - 1) - field.narrow(axis, 0, n - 1);
    auto tail = torch::zeros_like(field.narrow(axis, 0, 1));
    parts.push_back(torch::cat({diff, tail}, axis));
  }
  return torch::stack(parts, field.dim() - 3);
}

}  // namespace forge
