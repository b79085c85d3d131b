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

#include <algorithm>
#include <span>
#include <vector>

#include "regsyn/autodiff.hpp"
#include "regsyn/error.hpp"
#include "regsyn/volume.hpp"

namespace regsyn {

/// Stacks same-sized volumes into a {N, 1, D, H, W} constant tensor.
template <class T>
ad::Var<T> volumes_to_var(std::span<const Volume> volumes) {
  if (volumes.empty()) throw DimensionError("empty volume batch");
  const Dims d = volumes.front().dims();
  std::vector<T> data;
  data.reserve(volumes.size() * d.voxels());
  for (const auto& v : volumes) {
    if (v.dims() != d) throw DimensionError("volume batch with mixed dims");
    data.insert(data.end(), v.voxels().begin(), v.voxels().end());
  }
  return ad::Var<T>::constant({static_cast<int>(volumes.size()), 1, d.d, d.h, d.w}, std::move(data));
}

template <class T>
ad::Var<T> volume_to_var(const Volume& v) {
  return volumes_to_var<T>(std::span<const Volume>(&v, 1));
}

/// Extracts sample `n` of a single-channel {N, 1, D, H, W} tensor.
template <class T>
Volume var_to_volume(const ad::Var<T>& x, int n, Units units, Modality modality, Spacing spacing = {}) {
  const auto& s = x.shape();
  if (s.size() != 5 || s[1] != 1) throw DimensionError("expected a single-channel {N,1,D,H,W} tensor");
  const Dims d{s[2], s[3], s[4]};
  const auto v = x.value().subspan(static_cast<std::size_t>(n) * d.voxels(), d.voxels());
  std::vector<float> voxels(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) voxels[i] = static_cast<float>(v[i]);
  if (units == Units::Normalized) {
    for (auto& f : voxels) f = std::clamp(f, -1.0f, 1.0f);
  }
  return Volume(d, spacing, std::move(voxels), units, modality);
}

}  // namespace regsyn
