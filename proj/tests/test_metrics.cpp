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

#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "regsyn/metrics.hpp"
#include "regsyn/phantom.hpp"
#include "test_util.hpp"

using namespace regsyn;

namespace {

Volume hu(Dims d, std::vector<float> v) { return Volume(d, {}, std::move(v), Units::HU, Modality::Target); }

Volume random_hu(Dims d, std::uint64_t seed) { return hu(d, testing::uniform_floats(d.voxels(), seed, -1000.0f, 1000.0f)); }

Mask full_mask(Dims d) { return Mask(d, std::vector<std::uint8_t>(d.voxels(), 1)); }

Mask random_mask(Dims d, std::uint64_t seed) {
  const auto u = testing::uniform_floats(d.voxels(), seed, 0.0f, 1.0f);
  std::vector<std::uint8_t> m(d.voxels());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = u[i] < 0.4f;
  return Mask(d, m);
}

// Direct 3-D windowed SSIM: Gaussian weights on the in-volume part of each
// 11^3 window, renormalized, averaged over mask centres.
double ssim_oracle(const Volume& a, const Volume& b, const Mask& m, double range) {
  const Dims d = a.dims();
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double acc = 0.0;
  std::size_t n = 0;
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        if (!m.at(z, y, x)) continue;
        double sw = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dz = -5; dz <= 5; ++dz)
          for (int dy = -5; dy <= 5; ++dy)
            for (int dx = -5; dx <= 5; ++dx) {
              const int zz = z + dz, yy = y + dy, xx = x + dx;
              if (zz < 0 || yy < 0 || xx < 0 || zz >= d.d || yy >= d.h || xx >= d.w) continue;
              const double w = std::exp(-(dz * dz + dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
              const double va = a.at(zz, yy, xx), vb = b.at(zz, yy, xx);
              sw += w;
              sa += w * va;
              sb += w * vb;
              saa += w * va * va;
              sbb += w * vb * vb;
              sab += w * va * vb;
            }
        const double ma = sa / sw, mb = sb / sw;
        const double va = saa / sw - ma * ma, vb = sbb / sw - mb * mb, cab = sab / sw - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
  return acc / n;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("MAE: identical, constant offset, mask restriction") {
    const Dims d{12, 12, 12};
    const Volume a = random_hu(d, 1);
    const Mask m = full_mask(d);
    CHECK(mae_masked(a, a, m) == 0.0);
    std::vector<float> shifted(a.voxels().begin(), a.voxels().end());
    for (auto& v : shifted) v += 20.0f;
    CHECK(mae_masked(hu(d, shifted), a, m) == doctest::Approx(20.0).epsilon(1e-5));
    const Mask r = random_mask(d, 2);
    CHECK(mae_masked(hu(d, shifted), a, r) == doctest::Approx(20.0).epsilon(1e-5));
    CHECK_THROWS_AS(mae_masked(a, a, Mask(d, std::vector<std::uint8_t>(d.voxels(), 0))), EmptyMaskError);
  }

  TEST_CASE("PSNR: infinite when identical, 40 dB for a 20 HU offset over range 2000") {
    const Dims d{12, 12, 12};
    const Volume a = random_hu(d, 3);
    const Mask m = full_mask(d);
    CHECK(psnr_masked(a, a, m).infinite);
    std::vector<float> shifted(a.voxels().begin(), a.voxels().end());
    for (auto& v : shifted) v -= 20.0f;
    const Psnr p = psnr_masked(hu(d, shifted), a, m);
    CHECK_FALSE(p.infinite);
    CHECK(p.db == doctest::Approx(40.0).epsilon(1e-5));
  }

  TEST_CASE("SSIM: identical volumes give 1") {
    const Dims d{12, 13, 14};
    const Volume a = random_hu(d, 4);
    CHECK(ssim_masked(a, a, random_mask(d, 5)) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("SSIM matches a direct windowed oracle") {
    const Dims d{12, 12, 13};
    const Volume a = random_hu(d, 6);
    std::vector<float> bv(a.voxels().begin(), a.voxels().end());
    const auto noise = testing::uniform_floats(d.voxels(), 7, -300.0f, 300.0f);
    for (std::size_t i = 0; i < bv.size(); ++i) bv[i] += noise[i];
    const Volume b = hu(d, bv);
    const Mask m = random_mask(d, 8);
    const double got = ssim_masked(a, b, m);
    CHECK(got == doctest::Approx(ssim_oracle(a, b, m, 2000.0)).epsilon(1e-5));
    CHECK(got < 1.0);
  }

  TEST_CASE("voxels whose windows avoid the mask do not affect the metrics") {
    const Dims d{24, 12, 12};
    std::vector<std::uint8_t> mv(d.voxels(), 0);
    for (int z = 0; z < 6; ++z)
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) mv[d.index(z, y, x)] = 1;
    const Mask m(d, mv);
    const Volume ref = random_hu(d, 9);
    const Volume pred = random_hu(d, 10);
    std::vector<float> changed(pred.voxels().begin(), pred.voxels().end());
    for (int z = 12; z < 24; ++z)  // beyond the mask plus the window radius
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) changed[d.index(z, y, x)] = 777.0f;
    const Volume pred2 = hu(d, changed);
    CHECK(mae_masked(pred2, ref, m) == mae_masked(pred, ref, m));
    CHECK(psnr_masked(pred2, ref, m).db == psnr_masked(pred, ref, m).db);
    CHECK(ssim_masked(pred2, ref, m) == ssim_masked(pred, ref, m));
  }

  TEST_CASE("SSIM rejects volumes smaller than the window") {
    const Dims d{8, 12, 12};
    const Volume a = random_hu(d, 11);
    CHECK_THROWS_AS(ssim_masked(a, a, full_mask(d)), DimensionError);
  }

  TEST_CASE("mean and sample standard deviation") {
    const MeanStd s = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.count == 4);
    CHECK(mean_std({7.0}).std == 0.0);
  }

  TEST_CASE("dataset evaluation over flat directories and a phantom dataset") {
    const auto root = testing::scratch_dir("metrics_eval");
    const Dims d{12, 12, 12};
    for (const char* sub : {"pred", "ref", "mask"}) std::filesystem::create_directories(root / sub);
    for (int k = 0; k < 3; ++k) {
      const std::string id = "case" + std::to_string(k);
      const Volume r = random_hu(d, 20 + k);
      save_volume(r, root / "ref" / (id + ".mivol"));
      save_volume(r, root / "pred" / (id + ".mivol"));
      save_mask(random_mask(d, 30 + k), root / "mask" / (id + ".mivol"));
    }
    const CohortReport rep = evaluate_dataset(root / "pred", root / "ref", root / "mask");
    CHECK(rep.cases.size() == 3);
    CHECK(rep.mae.mean == 0.0);
    CHECK(rep.psnr_infinite == 3);
    CHECK(rep.ssim.mean == doctest::Approx(1.0));
    write_report(rep, root / "out");
    std::ifstream csv(root / "out" / "metrics.csv");
    std::string header, first;
    std::getline(csv, header);
    std::getline(csv, first);
    CHECK(header == "case,mae_hu,psnr_db,ssim");
    CHECK(first.find(",inf,") != std::string::npos);
    const auto summary = nlohmann::json::parse(std::ifstream(root / "out" / "summary.json"));
    CHECK(summary.contains("mae_hu"));

    std::filesystem::remove(root / "pred" / "case1.mivol");
    CHECK_THROWS_AS(evaluate_dataset(root / "pred", root / "ref", root / "mask"), ManifestError);

    // A phantom dataset evaluated against itself: perfect scores on the test split.
    PhantomConfig pc;
    pc.dims = {16, 16, 16};
    write_phantom_dataset(root / "ds", pc, 3, SplitCounts{1, 0, 2});
    const CohortReport self = evaluate_dataset(root / "ds", root / "ds", root / "ds");
    CHECK(self.cases.size() == 2);
    CHECK(self.mae.mean == 0.0);
  }
}
