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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "regsyn/convert.hpp"
#include "regsyn/nn.hpp"
#include "regsyn/volume.hpp"

namespace regsyn {

/// Dense displacement field in voxel units, components ordered (dz, dy, dx)
/// and stored component-major, matching a {1, 3, D, H, W} tensor.
class DeformationField {
 public:
  DeformationField(Dims dims, std::vector<float> displacements);
  static DeformationField zeros(Dims dims);
  /// Same displacement (dz, dy, dx) at every voxel.
  static DeformationField constant(Dims dims, float dz, float dy, float dx);

  const Dims& dims() const { return dims_; }
  std::span<const float> values() const { return values_; }
  std::span<const float> component(int c) const {
    return std::span<const float>(values_).subspan(static_cast<std::size_t>(c) * dims_.voxels(), dims_.voxels());
  }
  float at(int c, int z, int y, int x) const { return component(c)[dims_.index(z, y, x)]; }
  float magnitude(std::size_t voxel) const;
  float max_magnitude() const;
  DeformationField scaled(float s) const;

  bool operator==(const DeformationField&) const = default;

 private:
  Dims dims_;
  std::vector<float> values_;
};

/// Writes field_z/field_y/field_x MIVOL volumes (units tag HU: unnormalized).
void save_field(const DeformationField& f, const std::filesystem::path& dir, const std::string& stem = "field");
DeformationField load_field(const std::filesystem::path& dir, const std::string& stem = "field");

template <class T>
ad::Var<T> field_to_var(std::span<const DeformationField> fields) {
  if (fields.empty()) throw DimensionError("empty field batch");
  const Dims d = fields.front().dims();
  std::vector<T> data;
  data.reserve(fields.size() * 3 * d.voxels());
  for (const auto& f : fields) {
    if (f.dims() != d) throw DimensionError("field batch with mixed dims");
    data.insert(data.end(), f.values().begin(), f.values().end());
  }
  return ad::Var<T>::constant({static_cast<int>(fields.size()), 3, d.d, d.h, d.w}, std::move(data));
}

template <class T>
DeformationField var_to_field(const ad::Var<T>& flow, int sample = 0) {
  const auto& s = flow.shape();
  if (s.size() != 5 || s[1] != 3) throw DimensionError("expected a {N,3,D,H,W} field, got " + ad::shape_string(s));
  const Dims d{s[2], s[3], s[4]};
  const std::size_t n = 3 * d.voxels();
  const auto v = flow.value().subspan(static_cast<std::size_t>(sample) * n, n);
  return DeformationField(d, std::vector<float>(v.begin(), v.end()));
}

/// Resampler R_S: out(p) = x(p + field(p)), trilinear, clamped to border.
template <class T>
ad::Var<T> warp(const ad::Var<T>& x, const ad::Var<T>& field) {
  return ad::grid_sample(x, field);
}

Volume warp(const Volume& v, const DeformationField& field);

/// Mean squared forward-difference gradient of the field (VoxelMorph-style
/// diffusion regularizer).
template <class T>
ad::Var<T> smoothness_loss(const ad::Var<T>& field) {
  return ad::gradient_energy(field);
}

double smoothness_loss(const DeformationField& field);

/// Deformation generator R_Phi: a 3D U-Net on the channel-concatenated
/// (source, target) pair. Encoder widths (16, 32, 32, 32) at strides of 2,
/// mirrored decoder with skip connections, 3-channel flow head initialized
/// to zero so the predicted field is exactly zero before training.
template <class T>
class RegistrationNet {
 public:
  static RegistrationNet make(nn::ParameterSet<T>& ps, const std::string& name, double channel_scale) {
    RegistrationNet r;
    const int e1 = nn::scaled(16, channel_scale);
    const int e2 = nn::scaled(32, channel_scale);
    const int e3 = nn::scaled(32, channel_scale);
    const int e4 = nn::scaled(32, channel_scale);
    const int dec = nn::scaled(32, channel_scale);
    const int full = nn::scaled(16, channel_scale);
    r.enc1 = nn::Conv3d<T>::make(ps, name + ".enc1", 2, e1, 3, 2);
    r.enc2 = nn::Conv3d<T>::make(ps, name + ".enc2", e1, e2, 3, 2);
    r.enc3 = nn::Conv3d<T>::make(ps, name + ".enc3", e2, e3, 3, 2);
    r.enc4 = nn::Conv3d<T>::make(ps, name + ".enc4", e3, e4, 3, 2);
    r.dec4 = nn::Conv3d<T>::make(ps, name + ".dec4", e4, dec, 3, 1);
    r.dec3 = nn::Conv3d<T>::make(ps, name + ".dec3", dec + e3, dec, 3, 1);
    r.dec2 = nn::Conv3d<T>::make(ps, name + ".dec2", dec + e2, dec, 3, 1);
    r.dec1 = nn::Conv3d<T>::make(ps, name + ".dec1", dec + e1, dec, 3, 1);
    r.dec0 = nn::Conv3d<T>::make(ps, name + ".dec0", dec + 2, full, 3, 1);
    r.flow = nn::Conv3d<T>::make(ps, name + ".flow", full, 3, 3, 1, nn::Init::Zeros);
    return r;
  }

  /// source, target: {N, 1, D, H, W} with D, H, W multiples of 16.
  ad::Var<T> operator()(const nn::ParameterSet<T>& ps, const ad::Var<T>& source, const ad::Var<T>& target) const {
    if (source.shape() != target.shape()) throw DimensionError("registration inputs differ in shape");
    const auto& s = source.shape();
    if (s.size() != 5 || s[1] != 1) throw DimensionError("registration expects single-channel volumes");
    for (int i = 2; i < 5; ++i) {
      if (s[i] % 16 != 0) throw DimensionError("registration input dims must be multiples of 16");
    }
    constexpr T kSlope = T(0.2);
    const ad::Var<T> x0 = ad::concat_channels(source, target);
    const ad::Var<T> x1 = ad::leaky_relu(enc1(ps, x0), kSlope);
    const ad::Var<T> x2 = ad::leaky_relu(enc2(ps, x1), kSlope);
    const ad::Var<T> x3 = ad::leaky_relu(enc3(ps, x2), kSlope);
    const ad::Var<T> x4 = ad::leaky_relu(enc4(ps, x3), kSlope);
    ad::Var<T> y = ad::leaky_relu(dec4(ps, x4), kSlope);
    y = ad::leaky_relu(dec3(ps, ad::concat_channels(ad::upsample_nearest2(y), x3)), kSlope);
    y = ad::leaky_relu(dec2(ps, ad::concat_channels(ad::upsample_nearest2(y), x2)), kSlope);
    y = ad::leaky_relu(dec1(ps, ad::concat_channels(ad::upsample_nearest2(y), x1)), kSlope);
    y = ad::leaky_relu(dec0(ps, ad::concat_channels(ad::upsample_nearest2(y), x0)), kSlope);
    return flow(ps, y);
  }

 private:
  nn::Conv3d<T> enc1, enc2, enc3, enc4, dec4, dec3, dec2, dec1, dec0, flow;
};

}  // namespace regsyn
