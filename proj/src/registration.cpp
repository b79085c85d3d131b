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

#include "regsyn/registration.hpp"

#include <algorithm>
#include <cmath>

namespace regsyn {

DeformationField::DeformationField(Dims dims, std::vector<float> displacements)
    : dims_(dims), values_(std::move(displacements)) {
  if (!dims_.positive()) throw ValidationError("field dims must be positive");
  if (values_.size() != 3 * dims_.voxels()) throw ValidationError("field must hold 3 components per voxel");
  for (float v : values_) {
    if (!std::isfinite(v)) throw ValidationError("non-finite displacement");
  }
}

DeformationField DeformationField::zeros(Dims dims) {
  return DeformationField(dims, std::vector<float>(3 * dims.voxels(), 0.0f));
}

DeformationField DeformationField::constant(Dims dims, float dz, float dy, float dx) {
  std::vector<float> v(3 * dims.voxels());
  const std::size_t n = dims.voxels();
  std::fill_n(v.begin(), n, dz);
  std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(n), n, dy);
  std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(2 * n), n, dx);
  return DeformationField(dims, std::move(v));
}

float DeformationField::magnitude(std::size_t voxel) const {
  const std::size_t n = dims_.voxels();
  const double z = values_[voxel], y = values_[n + voxel], x = values_[2 * n + voxel];
  return static_cast<float>(std::sqrt(z * z + y * y + x * x));
}

float DeformationField::max_magnitude() const {
  float m = 0.0f;
  for (std::size_t i = 0; i < dims_.voxels(); ++i) m = std::max(m, magnitude(i));
  return m;
}

DeformationField DeformationField::scaled(float s) const {
  std::vector<float> v(values_);
  for (auto& f : v) f *= s;
  return DeformationField(dims_, std::move(v));
}

void save_field(const DeformationField& f, const std::filesystem::path& dir, const std::string& stem) {
  const char* names[3] = {"_z", "_y", "_x"};
  for (int c = 0; c < 3; ++c) {
    const auto comp = f.component(c);
    save_volume(Volume(f.dims(), {}, std::vector<float>(comp.begin(), comp.end()), Units::HU, Modality::Target),
                dir / (stem + names[c] + ".mivol"));
  }
}

DeformationField load_field(const std::filesystem::path& dir, const std::string& stem) {
  const char* names[3] = {"_z", "_y", "_x"};
  std::vector<float> values;
  Dims dims;
  for (int c = 0; c < 3; ++c) {
    const Volume v = load_volume(dir / (stem + names[c] + ".mivol"));
    if (c == 0) {
      dims = v.dims();
    } else if (v.dims() != dims) {
      throw CorruptionError("field components disagree in dims");
    }
    values.insert(values.end(), v.voxels().begin(), v.voxels().end());
  }
  return DeformationField(dims, std::move(values));
}

Volume warp(const Volume& v, const DeformationField& field) {
  if (v.dims() != field.dims()) {
    throw DimensionError("field dims " + to_string(field.dims()) + " do not match volume " + to_string(v.dims()));
  }
  const auto x = volume_to_var<float>(v);
  const auto f = field_to_var<float>(std::span<const DeformationField>(&field, 1));
  return var_to_volume(warp(x, f), 0, v.units(), v.modality(), v.spacing());
}

double smoothness_loss(const DeformationField& field) {
  const auto f = field_to_var<double>(std::span<const DeformationField>(&field, 1));
  return smoothness_loss(f).item();
}

}  // namespace regsyn
