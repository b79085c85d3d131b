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

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace regsyn {

/// Grid extent, slowest axis first: D (z), H (y), W (x).
struct Dims {
  int d = 0;
  int h = 0;
  int w = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool positive() const { return d > 0 && h > 0 && w > 0; }
  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  auto operator<=>(const Dims&) const = default;
};

std::string to_string(const Dims& dims);

/// Millimetres per voxel, (sz, sy, sx).
struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
  bool operator==(const Spacing&) const = default;
};

enum class Units { HU, Normalized };
enum class Modality { Source, Target };

const char* to_string(Units u);
const char* to_string(Modality m);

/// Dense float32 scalar volume. Immutable after construction; the
/// constructor enforces the invariants (positive dims, finite voxels,
/// normalized volumes within [-1, 1], positive spacing).
class Volume {
 public:
  Volume(Dims dims, Spacing spacing, std::vector<float> voxels, Units units,
         Modality modality);

  static Volume filled(Dims dims, float value, Units units = Units::Normalized,
                       Modality modality = Modality::Source, Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  Units units() const { return units_; }
  Modality modality() const { return modality_; }
  std::span<const float> voxels() const { return voxels_; }
  float at(int z, int y, int x) const { return voxels_[dims_.index(z, y, x)]; }

  Volume with_voxels(std::vector<float> voxels) const;
  Volume with_voxels(std::vector<float> voxels, Units units) const;
  Volume with_modality(Modality modality) const;

  bool operator==(const Volume&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> voxels_;
  Units units_;
  Modality modality_;
};

/// Binary body mask; voxels are 0 or 1.
class Mask {
 public:
  Mask(Dims dims, std::vector<std::uint8_t> voxels, Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const std::uint8_t> voxels() const { return voxels_; }
  bool at(int z, int y, int x) const { return voxels_[dims_.index(z, y, x)] != 0; }
  std::size_t count() const;

  bool operator==(const Mask&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint8_t> voxels_;
};

// -- MIVOL file format ------------------------------------------------------
//
// bytes 0-6   magic "MIVOL1\n"
// bytes 7-14  u64 little-endian JSON header length L
// next L      UTF-8 JSON: dims, spacing, dtype ("f32le" | "u8"), units, modality
// remainder   D*H*W voxels, x fastest

inline constexpr std::string_view kMivolMagic = "MIVOL1\n";

Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& v, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& m, const std::filesystem::path& path);

// -- Intensity ---------------------------------------------------------------

inline constexpr double kDefaultHuLo = -1000.0;
inline constexpr double kDefaultHuHi = 1000.0;

/// Clip to [lo, hi] and map affinely onto [-1, 1].
Volume normalize_intensity(const Volume& v, double lo = kDefaultHuLo, double hi = kDefaultHuHi);
/// Inverse affine map from [-1, 1] back to HU.
Volume denormalize_intensity(const Volume& v, double lo = kDefaultHuLo, double hi = kDefaultHuHi);

// -- Masks and patches -------------------------------------------------------

inline constexpr double kDefaultBodyThresholdHu = -500.0;

/// Largest 6-connected component of {v > threshold}, holes filled per axial slice.
Mask compute_body_mask(const Volume& v, double threshold = kDefaultBodyThresholdHu);

struct Index3 {
  int z = 0;
  int y = 0;
  int x = 0;
};

Volume extract_patch(const Volume& v, Index3 origin, Dims size);
Mask extract_patch(const Mask& m, Index3 origin, Dims size);

}  // namespace regsyn
