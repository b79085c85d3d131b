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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "regsyn/phantom.hpp"
#include "regsyn/registration.hpp"
#include "test_util.hpp"

using namespace regsyn;

namespace {

PhantomConfig small_cfg(int n = 32) {
  PhantomConfig c;
  c.dims = {n, n, n};
  return c;
}

// Mean |displacement| over the body mask.
double mean_mag_over_mask(const PhantomPair& p) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.mask.voxels().size(); ++i) {
    if (!p.mask.voxels()[i]) continue;
    s += p.true_field.magnitude(i);
    ++n;
  }
  return s / n;
}

}  // namespace

TEST_SUITE("phantom") {
  TEST_CASE("pairs are deterministic in (cfg, seed)") {
    const auto cfg = small_cfg();
    const PhantomPair a = generate_phantom_pair(cfg, 42);
    const PhantomPair b = generate_phantom_pair(cfg, 42);
    CHECK(a.source == b.source);
    CHECK(a.target_aligned == b.target_aligned);
    CHECK(a.target_misaligned == b.target_misaligned);
    CHECK(a.true_field == b.true_field);
    CHECK(a.mask == b.mask);
    const PhantomPair c = generate_phantom_pair(cfg, 43);
    CHECK_FALSE(a.source == c.source);
  }

  TEST_CASE("zero amplitude leaves the target aligned") {
    auto cfg = small_cfg();
    cfg.misalign_amplitude = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const PhantomPair p = generate_phantom_pair(cfg, seed);
      CHECK(p.target_misaligned == p.target_aligned);
    }
  }

  TEST_CASE("misalignment magnitude over the mask, amplitude 3 sigma 8 (20 seeds)") {
    PhantomConfig cfg;  // 64^3 defaults
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double m = mean_mag_over_mask(generate_phantom_pair(cfg, 1000 + seed));
      CHECK(m >= 0.5);
      CHECK(m <= 3.0);
    }
  }

  TEST_CASE("misaligned target equals the warped aligned target") {
    const PhantomPair p = generate_phantom_pair(small_cfg(), 5);
    CHECK(warp(p.target_aligned, p.true_field) == p.target_misaligned);
    CHECK(p.source.dims() == p.target_aligned.dims());
    CHECK(p.mask.dims() == p.source.dims());
    CHECK(p.true_field.dims() == p.source.dims());
  }

  TEST_CASE("random smooth field: zero amplitude, max magnitude, smoothness ordering") {
    const Dims d{24, 24, 24};
    const auto z = random_smooth_field(d, 0.0, 8.0, 1);
    CHECK(z.max_magnitude() == 0.0f);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto smooth = random_smooth_field(d, 3.0, 8.0, seed);
      const auto rough = random_smooth_field(d, 3.0, 2.0, seed);
      CHECK(std::abs(smooth.max_magnitude() - 3.0f) < 1e-5f);
      CHECK(std::abs(rough.max_magnitude() - 3.0f) < 1e-5f);
      CHECK(smoothness_loss(smooth) < smoothness_loss(rough));
    }
    CHECK(random_smooth_field(d, 2.0, 4.0, 9) == random_smooth_field(d, 2.0, 4.0, 9));
    CHECK_THROWS_AS(random_smooth_field(d, 1.0, 0.0, 1), ParameterError);
  }

  TEST_CASE("identity LUT returns its input") {
    StyleParams style;
    style.target_lut = IntensityLut::identity();
    const Volume v = testing::random_volume({6, 6, 6}, 8);
    const Volume out = style_transform(v, Modality::Target, style);
    CHECK(std::equal(out.voxels().begin(), out.voxels().end(), v.voxels().begin()));
  }

  TEST_CASE("monotone LUT preserves voxel ranking") {
    StyleParams style;
    const Volume v = testing::random_volume({5, 6, 7}, 9);
    const Volume out = style_transform(v, Modality::Source, style);
    std::vector<std::size_t> a(v.voxels().size()), b(a.size());
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    std::stable_sort(a.begin(), a.end(), [&](auto i, auto j) { return v.voxels()[i] < v.voxels()[j]; });
    // Ranking preserved: the output is non-decreasing along the input order.
    for (std::size_t k = 1; k < a.size(); ++k) CHECK(out.voxels()[a[k - 1]] <= out.voxels()[a[k]]);
    CHECK_THROWS_AS((IntensityLut{{0.0, 0.0}, {0.0, 1.0}}.validate()), ParameterError);
    CHECK_THROWS_AS((IntensityLut{{0.0, 1.0}, {1.0, 0.0}}.validate()), ParameterError);
  }

  TEST_CASE("source and target styles differ per organ by more than 0.1 (10 phantoms)") {
    const auto cfg = small_cfg();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const PhantomPair p = generate_phantom_pair(cfg, 200 + seed);
      std::map<int, std::pair<double, int>> per_label;
      for (std::size_t i = 0; i < p.labels.labels.size(); ++i) {
        const int l = p.labels.labels[i];
        if (l < 2) continue;
        auto& acc = per_label[l];
        acc.first += std::abs(p.source.voxels()[i] - p.target_aligned.voxels()[i]);
        acc.second += 1;
      }
      REQUIRE_FALSE(per_label.empty());
      for (const auto& [label, acc] : per_label) CHECK(acc.first / acc.second > 0.1);
    }
  }

  TEST_CASE("anatomy sits inside an air background") {
    const PhantomPair p = generate_phantom_pair(small_cfg(), 77);
    CHECK(p.target_aligned.at(0, 0, 0) == -1.0f);
    CHECK(p.mask.count() > 0);
    CHECK(p.mask.count() < p.mask.voxels().size());
    for (std::size_t i = 0; i < p.mask.voxels().size(); ++i) {
      CHECK((p.mask.voxels()[i] != 0) == (p.labels.labels[i] > 0));
    }
  }

  TEST_CASE("constant translation phantoms") {
    auto cfg = small_cfg();
    cfg.translation = std::array<double, 3>{0.0, 0.0, 2.0};
    const PhantomPair p = generate_phantom_pair(cfg, 3);
    CHECK(p.true_field.at(2, 4, 5, 6) == 2.0f);
    CHECK(p.true_field.at(0, 4, 5, 6) == 0.0f);
    // Integer shift: interior voxels move by exactly two columns.
    CHECK(p.target_misaligned.at(16, 16, 10) == p.target_aligned.at(16, 16, 12));
  }

  TEST_CASE("dataset writing, splits and loading") {
    const auto dir = testing::scratch_dir("dataset");
    const auto counts = SplitCounts::proportional(11);
    CHECK(counts.total() == 11);
    const auto m = write_phantom_dataset(dir, small_cfg(16), 5, SplitCounts{3, 1, 2});
    CHECK(m.cases.size() == 6);
    const auto loaded = load_manifest(dir);
    CHECK(loaded.split(Split::Train).size() == 3);
    CHECK(loaded.split(Split::Val).size() == 1);
    CHECK(loaded.split(Split::Test).size() == 2);
    const auto c = loaded.split(Split::Test).front();
    const CaseVolumes v = load_case(loaded, c);
    const PhantomPair p = generate_phantom_pair(small_cfg(16), c.seed);
    CHECK(v.source == p.source);
    CHECK(v.target_aligned == p.target_aligned);
    CHECK(v.target_misaligned == p.target_misaligned);
    CHECK(v.mask == p.mask);
    CHECK(load_field(loaded.case_dir(c)) == p.true_field);
    const auto default_counts = SplitCounts::proportional(55);
    CHECK(default_counts.train == 40);
    CHECK(default_counts.val == 5);
    CHECK(default_counts.test == 10);
  }

  TEST_CASE("configuration validation") {
    PhantomConfig c;
    c.dims = {8, 64, 64};
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = PhantomConfig{};
    c.misalign_sigma = 0.0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
  }
}
