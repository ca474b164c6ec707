#pragma once

// Backward warping: the output at voxel v samples the moving grid at v + S(v).
// Sample positions outside the grid are clamped to the border, identically for
// the trilinear and nearest-neighbour variants.

#include "forge/grid.hpp"

#include <torch/torch.h>

namespace forge {

/// Differentiable trilinear warp. `moving` is (N, C, D, H, W), `field` is
/// (N, 3, D, H, W) in voxel units; gradients flow to both inputs.
torch::Tensor warp_trilinear(const torch::Tensor& moving, const torch::Tensor& field);

Volume warp_trilinear(const Volume& moving, const DisplacementField& field);

/// Nearest-neighbour warp of any-dtype grids (N, C, D, H, W). Positions are
/// rounded half away from zero before clamping. Not differentiable.
torch::Tensor warp_nearest(const torch::Tensor& moving, const torch::Tensor& field);

LabelMap warp_nearest(const LabelMap& moving, const DisplacementField& field);

/// Forward differences of every channel along each spatial axis, with zero at
/// the trailing slice. Input (..., C, D, H, W) -> output (..., C, 3, D, H, W),
/// where index 3 selects the derivative axis. Differentiable.
torch::Tensor spatial_gradient(const torch::Tensor& field);

}  // namespace forge
