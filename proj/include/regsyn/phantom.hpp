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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "regsyn/registration.hpp"
#include "regsyn/volume.hpp"

namespace regsyn {

/// Integer label grid: 0 air, 1 body soft tissue, 2.. organs.
struct LabelMap {
  Dims dims;
  std::vector<std::uint8_t> labels;
};

/// Monotone piecewise-linear intensity map over normalized units. Knot x
/// values are strictly increasing, y values non-decreasing.
struct IntensityLut {
  std::vector<double> x;
  std::vector<double> y;

  static IntensityLut identity() { return {{-1.0, 1.0}, {-1.0, 1.0}}; }
  bool is_identity() const;
  double operator()(double v) const;
  void validate() const;
};

struct StyleParams {
  IntensityLut source_lut{{-1.0, -0.5, 0.0, 0.5, 1.0}, {-1.0, -0.3, 0.3, 0.7, 1.0}};
  IntensityLut target_lut = IntensityLut::identity();
  // Additive offset inside the first `enhanced_organs` organ labels of the
  // source style, emulating contrast enhancement.
  double enhancement = 0.25;
  int enhanced_organs = 2;
};

struct PhantomConfig {
  Dims dims{64, 64, 64};
  int organ_count_min = 3;
  int organ_count_max = 8;
  // Canonical (target-style) intensities in normalized units.
  double body_intensity = 0.05;
  double organ_intensity_lo = -0.15;
  double organ_intensity_hi = 0.35;
  double misalign_amplitude = 3.0;  // voxels
  double misalign_sigma = 8.0;      // voxels
  // When set, the misalignment is this constant (dz, dy, dx) translation
  // instead of a random smooth field.
  std::optional<std::array<double, 3>> translation;
  StyleParams style;

  void validate() const;
};

struct PhantomPair {
  Volume source;
  Volume target_aligned;
  Volume target_misaligned;
  DeformationField true_field;
  Mask mask;
  LabelMap labels;
  std::uint64_t seed = 0;
};

/// I.i.d. Gaussian noise per component, Gaussian-smoothed with width sigma,
/// rescaled so the largest displacement magnitude equals amplitude.
DeformationField random_smooth_field(Dims dims, double amplitude, double sigma, std::uint64_t seed);

/// Voxelwise style map of a normalized volume. The source style additionally
/// adds the enhancement offset inside enhanced organ labels (when labels are
/// given).
Volume style_transform(const Volume& v, Modality domain, const StyleParams& style,
                       const LabelMap* labels = nullptr);

LabelMap generate_anatomy(const PhantomConfig& cfg, std::uint64_t seed, std::vector<double>* organ_intensity = nullptr);

/// Deterministic in (cfg, seed). Verifies target_misaligned ==
/// warp(target_aligned, true_field) before returning.
PhantomPair generate_phantom_pair(const PhantomConfig& cfg, std::uint64_t seed);

// -- datasets ---------------------------------------------------------------

enum class Split { Train, Val, Test };
const char* to_string(Split s);

struct SplitCounts {
  int train = 40;
  int val = 5;
  int test = 10;
  int total() const { return train + val + test; }
  /// Keeps the 40/5/10 proportions for an arbitrary total.
  static SplitCounts proportional(int count);
};

struct CaseEntry {
  std::string id;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  std::filesystem::path dir;  // absolute or relative to the manifest
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  std::vector<CaseEntry> cases;

  std::vector<CaseEntry> split(Split s) const;
  std::filesystem::path case_dir(const CaseEntry& c) const { return root / c.dir; }
};

/// Writes one directory per case (source, target_aligned, target_misaligned,
/// mask, field_{z,y,x}) plus manifest.json.
DatasetManifest write_phantom_dataset(const std::filesystem::path& out, const PhantomConfig& cfg, std::uint64_t seed,
                                      SplitCounts counts);
DatasetManifest load_manifest(const std::filesystem::path& root);

struct CaseVolumes {
  Volume source;
  Volume target_aligned;
  Volume target_misaligned;
  Mask mask;
};
CaseVolumes load_case(const DatasetManifest& m, const CaseEntry& c);

}  // namespace regsyn
