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

#include "regsyn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "regsyn/error.hpp"
#include "regsyn/phantom.hpp"

namespace regsyn {

namespace fs = std::filesystem;

namespace {

void check_inputs(const Volume& pred, const Volume& ref, const Mask& mask) {
  if (pred.dims() != ref.dims() || pred.dims() != mask.dims()) {
    throw DimensionError("metric inputs differ in dims: " + to_string(pred.dims()) + " / " + to_string(ref.dims()) +
                         " / " + to_string(mask.dims()));
  }
  if (pred.units() != ref.units()) throw ValidationError("metric inputs differ in units");
  if (mask.count() == 0) throw EmptyMaskError("metric mask is empty");
}

double masked_mse(const Volume& pred, const Volume& ref, const Mask& mask) {
  check_inputs(pred, ref, mask);
  const auto p = pred.voxels();
  const auto r = ref.voxels();
  const auto m = mask.voxels();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!m[i]) continue;
    const double d = static_cast<double>(p[i]) - static_cast<double>(r[i]);
    sum += d * d;
    ++n;
  }
  return sum / static_cast<double>(n);
}

// Truncated, renormalized 1D Gaussian smoothing along one axis.
void smooth_axis(std::vector<double>& data, const Dims& dims, int axis, const std::vector<double>& kernel, int radius) {
  const int n[3] = {dims.d, dims.h, dims.w};
  const std::size_t stride[3] = {static_cast<std::size_t>(dims.h) * dims.w, static_cast<std::size_t>(dims.w), 1};
  const int len = n[axis];
  std::vector<double> line(len), out(len);
  const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
  for (int i = 0; i < n[a1]; ++i) {
    for (int j = 0; j < n[a2]; ++j) {
      const std::size_t base = i * stride[a1] + j * stride[a2];
      for (int k = 0; k < len; ++k) line[k] = data[base + k * stride[axis]];
      for (int k = 0; k < len; ++k) {
        double acc = 0.0, wsum = 0.0;
        const int lo = std::max(0, k - radius), hi = std::min(len - 1, k + radius);
        for (int t = lo; t <= hi; ++t) {
          const double w = kernel[t - k + radius];
          acc += w * line[t];
          wsum += w;
        }
        out[k] = acc / wsum;
      }
      for (int k = 0; k < len; ++k) data[base + k * stride[axis]] = out[k];
    }
  }
}

void smooth3(std::vector<double>& data, const Dims& dims, const std::vector<double>& kernel, int radius) {
  for (int axis = 0; axis < 3; ++axis) smooth_axis(data, dims, axis, kernel, radius);
}

Volume to_hu(const Volume& v, double lo, double hi) {
  return v.units() == Units::HU ? v : denormalize_intensity(v, lo, hi);
}

}  // namespace

double mae_masked(const Volume& pred, const Volume& ref, const Mask& mask) {
  check_inputs(pred, ref, mask);
  const auto p = pred.voxels();
  const auto r = ref.voxels();
  const auto m = mask.voxels();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!m[i]) continue;
    sum += std::abs(static_cast<double>(p[i]) - static_cast<double>(r[i]));
    ++n;
  }
  return sum / static_cast<double>(n);
}

Psnr psnr_masked(const Volume& pred, const Volume& ref, const Mask& mask, double data_range) {
  if (!(data_range > 0.0)) throw ValidationError("PSNR data range must be positive");
  const double mse = masked_mse(pred, ref, mask);
  if (mse == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {10.0 * std::log10(data_range * data_range / mse), false};
}

double ssim_masked(const Volume& pred, const Volume& ref, const Mask& mask, double data_range,
                   const SsimOptions& opt) {
  check_inputs(pred, ref, mask);
  if (!(data_range > 0.0)) throw ValidationError("SSIM data range must be positive");
  const Dims& dims = pred.dims();
  const int support = 2 * opt.radius + 1;
  if (dims.d < support || dims.h < support || dims.w < support) {
    throw DimensionError("volume " + to_string(dims) + " is smaller than the " + std::to_string(support) +
                         "^3 SSIM window");
  }
  std::vector<double> kernel(support);
  for (int i = 0; i < support; ++i) {
    const double t = i - opt.radius;
    kernel[i] = std::exp(-t * t / (2.0 * opt.sigma * opt.sigma));
  }

  const std::size_t n = dims.voxels();
  std::vector<double> mx(n), my(n), mxx(n), myy(n), mxy(n);
  const auto p = pred.voxels();
  const auto r = ref.voxels();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = p[i], y = r[i];
    mx[i] = x;
    my[i] = y;
    mxx[i] = x * x;
    myy[i] = y * y;
    mxy[i] = x * y;
  }
  for (auto* buf : {&mx, &my, &mxx, &myy, &mxy}) smooth3(*buf, dims, kernel, opt.radius);

  const double c1 = (opt.k1 * data_range) * (opt.k1 * data_range);
  const double c2 = (opt.k2 * data_range) * (opt.k2 * data_range);
  const auto m = mask.voxels();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    ++count;
  }
  return sum / static_cast<double>(count);
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (values.size() - 1));
  }
  return s;
}

CohortReport summarize(std::vector<CaseMetrics> cases) {
  CohortReport r;
  std::vector<double> mae, psnr, ssim;
  for (const auto& c : cases) {
    mae.push_back(c.mae);
    ssim.push_back(c.ssim);
    if (c.psnr.infinite) {
      ++r.psnr_infinite;
    } else {
      psnr.push_back(c.psnr.db);
    }
  }
  r.mae = mean_std(mae);
  r.psnr = mean_std(psnr);
  r.ssim = mean_std(ssim);
  r.cases = std::move(cases);
  return r;
}

std::map<std::string, fs::path> list_case_files(const fs::path& dir, const std::string& dataset_file) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  if (fs::exists(dir / "manifest.json")) {
    const DatasetManifest m = load_manifest(dir);
    for (const auto& c : m.split(Split::Test)) out[c.id] = m.case_dir(c) / dataset_file;
    return out;
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".mivol") out[e.path().stem().string()] = e.path();
  }
  return out;
}

CohortReport evaluate_dataset(const fs::path& pred_dir, const fs::path& ref_dir, const fs::path& mask_dir,
                              double hu_lo, double hu_hi) {
  const auto preds = list_case_files(pred_dir, "target_aligned.mivol");
  const auto refs = list_case_files(ref_dir, "target_aligned.mivol");
  const auto masks = list_case_files(mask_dir, "mask.mivol");
  if (preds.empty()) throw ManifestError("no cases in " + pred_dir.string());
  auto keys = [](const std::map<std::string, fs::path>& m) {
    std::set<std::string> k;
    for (const auto& [id, p] : m) k.insert(id);
    return k;
  };
  if (keys(preds) != keys(refs) || keys(preds) != keys(masks)) {
    throw ManifestError("case sets of prediction (" + std::to_string(preds.size()) + "), reference (" +
                        std::to_string(refs.size()) + ") and mask (" + std::to_string(masks.size()) +
                        ") directories differ");
  }
  std::vector<CaseMetrics> cases;
  const double range = hu_hi - hu_lo;
  for (const auto& [id, pred_path] : preds) {
    const Volume pred = to_hu(load_volume(pred_path), hu_lo, hu_hi);
    const Volume ref = to_hu(load_volume(refs.at(id)), hu_lo, hu_hi);
    const Mask mask = load_mask(masks.at(id));
    cases.push_back({id, mae_masked(pred, ref, mask), psnr_masked(pred, ref, mask, range),
                     ssim_masked(pred, ref, mask, range)});
  }
  return summarize(std::move(cases));
}

void write_report(const CohortReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
    csv.precision(10);
    csv << "case,mae_hu,psnr_db,ssim\n";
    for (const auto& c : report.cases) {
      csv << c.id << ',' << c.mae << ',';
      if (c.psnr.infinite) {
        csv << "inf";
      } else {
        csv << c.psnr.db;
      }
      csv << ',' << c.ssim << '\n';
    }
  }
  auto ms = [](const MeanStd& s) { return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; };
  nlohmann::json j{{"cases", report.cases.size()},
                   {"mae_hu", ms(report.mae)},
                   {"psnr_db", ms(report.psnr)},
                   {"psnr_infinite_cases", report.psnr_infinite},
                   {"ssim", ms(report.ssim)}};
  std::ofstream js(out_dir / "summary.json");
  if (!js) throw IoError("cannot write " + (out_dir / "summary.json").string());
  js << j.dump(2) << '\n';
}

}  // namespace regsyn
