#pragma once

// Reference implementations written as plain loops over std::vector<double>,
// independent of the tensor code paths they check.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

struct Dims {
  int64_t d, h, w;
  int64_t size() const { return d * h * w; }
  int64_t at(int64_t z, int64_t y, int64_t x) const { return (z * h + y) * w + x; }
};

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

inline Dims dims_of(const torch::Tensor& t) {
  const auto n = t.dim();
  return {t.size(n - 3), t.size(n - 2), t.size(n - 1)};
}

/// Trilinear sample of `vol` at a continuous position with border clamping.
inline double sample_trilinear(const std::vector<double>& vol, const Dims& g, double z, double y,
                               double x) {
  auto clampd = [](double v, int64_t n) { return std::min(std::max(v, 0.0), double(n - 1)); };
  z = clampd(z, g.d);
  y = clampd(y, g.h);
  x = clampd(x, g.w);
  const int64_t z0 = std::min<int64_t>(int64_t(std::floor(z)), g.d - 1);
  const int64_t y0 = std::min<int64_t>(int64_t(std::floor(y)), g.h - 1);
  const int64_t x0 = std::min<int64_t>(int64_t(std::floor(x)), g.w - 1);
  const int64_t z1 = std::min(z0 + 1, g.d - 1), y1 = std::min(y0 + 1, g.h - 1),
                x1 = std::min(x0 + 1, g.w - 1);
  const double fz = z - z0, fy = y - y0, fx = x - x0;
  double out = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double wgt = (a ? fz : 1 - fz) * (b ? fy : 1 - fy) * (c ? fx : 1 - fx);
        out += wgt * vol[g.at(a ? z1 : z0, b ? y1 : y0, c ? x1 : x0)];
      }
  return out;
}

/// Backward warp of a single-channel (D, H, W) grid by a (3, D, H, W) field.
inline std::vector<double> warp(const std::vector<double>& vol, const std::vector<double>& field,
                                const Dims& g) {
  std::vector<double> out(g.size());
  const auto n = g.size();
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        const auto i = g.at(z, y, x);
        out[i] = sample_trilinear(vol, g, z + field[i], y + field[n + i], x + field[2 * n + i]);
      }
  return out;
}

/// Forward difference along `axis` with zero at the trailing slice.
inline double diff(const std::vector<double>& v, const Dims& g, int64_t offset, int64_t z,
                   int64_t y, int64_t x, int axis) {
  const int64_t p[3] = {z, y, x};
  const int64_t lim[3] = {g.d, g.h, g.w};
  if (p[axis] + 1 >= lim[axis]) return 0.0;
  int64_t q[3] = {z, y, x};
  q[axis] += 1;
  return v[offset + g.at(q[0], q[1], q[2])] - v[offset + g.at(z, y, x)];
}

/// Sum over voxels of the L2 norm of all channel/axis forward differences.
inline double smoothness(const std::vector<double>& field, int64_t channels, const Dims& g) {
  double total = 0.0;
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        double sq = 0.0;
        for (int64_t c = 0; c < channels; ++c)
          for (int axis = 0; axis < 3; ++axis) {
            const double d = diff(field, g, c * g.size(), z, y, x, axis);
            sq += d * d;
          }
        total += std::sqrt(sq);
      }
  return total;
}

/// Sum over voxels of (1 - mask) times the L1 norm of the forward differences.
inline double masked_l1_gradient(const std::vector<double>& v, const std::vector<double>& mask,
                                 const Dims& g) {
  double total = 0.0;
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        double s = 0.0;
        for (int axis = 0; axis < 3; ++axis) s += std::abs(diff(v, g, 0, z, y, x, axis));
        total += (1.0 - mask[g.at(z, y, x)]) * s;
      }
  return total;
}

/// Local squared correlation summed over voxels: zero-padded n^3 windows,
/// means over the full window, unnormalised centred covariances.
inline double local_cc(const std::vector<double>& a, const std::vector<double>& b, const Dims& g,
                       int64_t n, double eps, std::vector<double>* per_voxel = nullptr) {
  const int64_t r = n / 2;
  const double count = double(n * n * n);
  double total = 0.0;
  if (per_voxel) per_voxel->assign(g.size(), 0.0);
  auto get = [&](const std::vector<double>& v, int64_t z, int64_t y, int64_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= g.d || y >= g.h || x >= g.w) return 0.0;
    return v[g.at(z, y, x)];
  };
  for (int64_t z = 0; z < g.d; ++z)
    for (int64_t y = 0; y < g.h; ++y)
      for (int64_t x = 0; x < g.w; ++x) {
        double ma = 0.0, mb = 0.0;
        for (int64_t i = -r; i <= r; ++i)
          for (int64_t j = -r; j <= r; ++j)
            for (int64_t k = -r; k <= r; ++k) {
              ma += get(a, z + i, y + j, x + k);
              mb += get(b, z + i, y + j, x + k);
            }
        ma /= count;
        mb /= count;
        double ab = 0.0, aa = 0.0, bb = 0.0;
        for (int64_t i = -r; i <= r; ++i)
          for (int64_t j = -r; j <= r; ++j)
            for (int64_t k = -r; k <= r; ++k) {
              const double da = get(a, z + i, y + j, x + k) - ma;
              const double db = get(b, z + i, y + j, x + k) - mb;
              ab += da * db;
              aa += da * da;
              bb += db * db;
            }
        const double v = ab * ab / (aa * bb + eps);
        if (per_voxel) (*per_voxel)[g.at(z, y, x)] = v;
        total += v;
      }
  return total;
}

/// Mean over pixels of -log softmax(logits)[target]; logits (K, P), target (P).
inline double cross_entropy(const std::vector<double>& logits, const std::vector<int64_t>& target,
                            int64_t k) {
  const auto p = static_cast<int64_t>(target.size());
  double total = 0.0;
  for (int64_t i = 0; i < p; ++i) {
    double mx = -INFINITY;
    for (int64_t c = 0; c < k; ++c) mx = std::max(mx, logits[c * p + i]);
    double z = 0.0;
    for (int64_t c = 0; c < k; ++c) z += std::exp(logits[c * p + i] - mx);
    total += -(logits[target[i] * p + i] - mx - std::log(z));
  }
  return total / double(p);
}

struct GradCheck {
  double rel_error = 0.0;  // |analytic - numeric| / |numeric| over the checked entries
  int64_t checked = 0;
};

/// Compares the autograd gradient of scalar `f` at `x` with central
/// differences on up to `max_entries` evenly strided entries.
inline GradCheck check_gradient(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                torch::Tensor x, double step, int64_t max_entries = 64) {
  x = x.detach().clone().requires_grad_(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x})[0].detach().flatten().to(torch::kFloat64);
  auto flat = x.detach().clone().flatten();
  const auto n = flat.numel();
  const int64_t stride = std::max<int64_t>(1, n / max_entries);
  double err = 0.0, norm = 0.0;
  GradCheck out;
  for (int64_t i = 0; i < n; i += stride) {
    auto plus = flat.clone();
    auto minus = flat.clone();
    plus[i] += step;
    minus[i] -= step;
    torch::NoGradGuard ng;
    const double fp = f(plus.view(x.sizes())).item<double>();
    const double fm = f(minus.view(x.sizes())).item<double>();
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i].item<double>();
    err += (a - numeric) * (a - numeric);
    norm += numeric * numeric;
    ++out.checked;
  }
  out.rel_error = std::sqrt(err) / std::max(std::sqrt(norm), 1e-300);
  return out;
}

}  // namespace oracle
