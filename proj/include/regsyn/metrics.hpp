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
#include <map>
#include <string>
#include <vector>

#include "regsyn/volume.hpp"

namespace regsyn {

/// Mean |pred - ref| over mask voxels. Both volumes in HU.
double mae_masked(const Volume& pred, const Volume& ref, const Mask& mask);

struct Psnr {
  double db = 0.0;
  bool infinite = false;  // masked MSE was exactly zero
};

inline constexpr double kDefaultDataRangeHu = kDefaultHuHi - kDefaultHuLo;

/// 10 log10(range^2 / masked MSE).
Psnr psnr_masked(const Volume& pred, const Volume& ref, const Mask& mask, double data_range = kDefaultDataRangeHu);

struct SsimOptions {
  double sigma = 1.5;
  int radius = 5;  // 11^3 support
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Volumetric SSIM averaged over voxels whose window centre lies in the mask.
/// Windows are truncated at the volume border and their weights renormalized.
double ssim_masked(const Volume& pred, const Volume& ref, const Mask& mask, double data_range = kDefaultDataRangeHu,
                   const SsimOptions& opt = {});

struct CaseMetrics {
  std::string id;
  double mae = 0.0;
  Psnr psnr;
  double ssim = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for one value
  int count = 0;
};
MeanStd mean_std(const std::vector<double>& values);

struct CohortReport {
  std::vector<CaseMetrics> cases;
  MeanStd mae;
  MeanStd psnr;  // over cases with finite PSNR
  int psnr_infinite = 0;
  MeanStd ssim;
};

CohortReport summarize(std::vector<CaseMetrics> cases);

/// Case files of a directory. A phantom dataset root (with manifest.json)
/// yields its test split, reading `dataset_file` from each case directory;
/// any other directory yields `<id>.mivol` for every such file in it.
std::map<std::string, std::filesystem::path> list_case_files(const std::filesystem::path& dir,
                                                             const std::string& dataset_file);

/// Metrics of every predicted case against its reference and mask. Volumes
/// in normalized units are mapped to HU with [hu_lo, hu_hi] first.
CohortReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir,
                              const std::filesystem::path& mask_dir, double hu_lo = kDefaultHuLo,
                              double hu_hi = kDefaultHuHi);

/// Writes metrics.csv (case,mae_hu,psnr_db,ssim) and summary.json.
void write_report(const CohortReport& report, const std::filesystem::path& out_dir);

}  // namespace regsyn
