// Copyright 2026 The regsyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "regsyn/autodiff.hpp"

// Differentiable tensor operations. Every op is instantiated for float
// (training) and double (gradient checks).
namespace regsyn::ad {

// -- elementwise ---------------------------------------------------------------
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> relu(const Var<T>& a);
template <class T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <class T> Var<T> tanh(const Var<T>& a);
/// Cuts the graph: same values, no gradient flows back.
template <class T> Var<T> detach(const Var<T>& a);

// -- reductions to a scalar ------------------------------------------------------
template <class T> Var<T> mean(const Var<T>& a);
/// mean |a - b|
template <class T> Var<T> l1(const Var<T>& a, const Var<T>& b);
/// mean (a - target)^2 for a constant target
template <class T> Var<T> mean_sq_to(const Var<T>& a, T target);
/// mean softplus(sign * a) = mean log(1 + exp(sign * a)); logits clamped to [-clamp, clamp].
template <class T> Var<T> mean_softplus(const Var<T>& a, T sign, T clamp = T(30));
/// Sum of scalars with weights.
template <class T> Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms);

// -- volumetric layers ({N, C, D, H, W}) -------------------------------------------
/// Cubic kernel k (odd), zero padding k/2, output spatial dims ceil(in/stride).
/// weight {Co, Ci, k, k, k}, bias {Co}.
template <class T> Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride);
/// Per-sample per-channel standardization over spatial dims (no affine).
template <class T> Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5));
/// y = x * scale + shift per channel. scale/shift are {1, C} (shared over
/// the batch) or {N, C}.
template <class T> Var<T> channel_affine(const Var<T>& x, const Var<T>& scale, const Var<T>& shift);
template <class T> Var<T> upsample_nearest2(const Var<T>& x);
/// 2x2x2 average pooling; odd trailing planes are dropped.
template <class T> Var<T> avg_pool2(const Var<T>& x);
template <class T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// Trilinear resampling: out(p) = x(p + flow(p)) with flow {N, 3, D, H, W}
/// in voxel units ordered (dz, dy, dx). Sample coordinates are clamped to
/// the grid. Differentiable in both x and flow.
template <class T> Var<T> grid_sample(const Var<T>& x, const Var<T>& flow);

/// Mean over batch, voxels, the 3 displacement components and the 3 axes of
/// squared forward differences (the last plane along each axis contributes 0).
template <class T> Var<T> gradient_energy(const Var<T>& flow);

// -- dense ------------------------------------------------------------------------
/// x {N, F}, weight {O, F}, bias {O} -> {N, O}
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

}  // namespace regsyn::ad
