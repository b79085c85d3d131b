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

#include "regsyn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "regsyn/error.hpp"
#include "regsyn/rng.hpp"

namespace regsyn {

using nlohmann::json;

// -- intensity LUT -------------------------------------------------------------

void IntensityLut::validate() const {
  if (x.size() < 2 || x.size() != y.size()) throw ParameterError("LUT needs >= 2 knots with matching x/y");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw ParameterError("LUT knot x values must increase strictly");
    if (y[i] < y[i - 1]) throw ParameterError("LUT must be monotone non-decreasing");
  }
}

bool IntensityLut::is_identity() const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != y[i]) return false;
  }
  return x.size() >= 2 && x.front() <= -1.0 && x.back() >= 1.0;
}

double IntensityLut::operator()(double v) const {
  if (v <= x.front()) return y.front();
  if (v >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double t = (v - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

void PhantomConfig::validate() const {
  if (dims.d < 16 || dims.h < 16 || dims.w < 16) {
    throw ParameterError("phantom dims must be at least 16 per axis to contain a body, got " + to_string(dims));
  }
  if (organ_count_min < 0 || organ_count_max < organ_count_min) throw ParameterError("invalid organ count range");
  if (organ_count_max > 250) throw ParameterError("too many organs");
  if (!(misalign_amplitude >= 0.0)) throw ParameterError("misalignment amplitude must be >= 0");
  if (!(misalign_sigma > 0.0)) throw ParameterError("misalignment sigma must be > 0");
  if (!(organ_intensity_lo <= organ_intensity_hi)) throw ParameterError("organ intensity range is inverted");
  style.source_lut.validate();
  style.target_lut.validate();
}

// -- smooth random field ---------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian smoothing with replicated borders.
void smooth(std::vector<double>& data, const Dims& dims, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int extent[3] = {dims.d, dims.h, dims.w};
  const std::size_t stride[3] = {static_cast<std::size_t>(dims.h) * dims.w, static_cast<std::size_t>(dims.w), 1};
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const int n = extent[axis];
    line.resize(n);
    // Iterate over all lines along `axis`.
    for (std::size_t base = 0; base < data.size(); ++base) {
      const int coord = static_cast<int>((base / stride[axis]) % n);
      if (coord != 0) continue;
      for (int i = 0; i < n; ++i) line[i] = data[base + i * stride[axis]];
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = -r; j <= r; ++j) s += k[j + r] * line[std::clamp(i + j, 0, n - 1)];
        data[base + i * stride[axis]] = s;
      }
    }
  }
}

}  // namespace

DeformationField random_smooth_field(Dims dims, double amplitude, double sigma, std::uint64_t seed) {
  if (!dims.positive()) throw ParameterError("field dims must be positive");
  if (!(sigma > 0.0)) throw ParameterError("sigma must be > 0");
  if (!(amplitude >= 0.0)) throw ParameterError("amplitude must be >= 0");
  if (amplitude == 0.0) return DeformationField::zeros(dims);
  const std::size_t n = dims.voxels();
  // Noise is drawn on a grid padded by the kernel radius and cropped after
  // smoothing, so border voxels are as smooth (and as strong) as interior ones.
  const int pad = static_cast<int>(std::ceil(3.0 * sigma));
  const Dims padded{dims.d + 2 * pad, dims.h + 2 * pad, dims.w + 2 * pad};
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> comps(3, std::vector<double>(n));
  std::vector<double> work(padded.voxels());
  for (auto& c : comps) {
    for (auto& v : work) v = gauss(rng);
    smooth(work, padded, sigma);
    for (int z = 0; z < dims.d; ++z)
      for (int y = 0; y < dims.h; ++y)
        for (int x = 0; x < dims.w; ++x) c[dims.index(z, y, x)] = work[padded.index(z + pad, y + pad, x + pad)];
  }
  double max_mag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_mag = std::max(max_mag, std::sqrt(comps[0][i] * comps[0][i] + comps[1][i] * comps[1][i] +
                                          comps[2][i] * comps[2][i]));
  }
  if (max_mag == 0.0) return DeformationField::zeros(dims);
  const double s = amplitude / max_mag;
  std::vector<float> values(3 * n);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < n; ++i) values[c * n + i] = static_cast<float>(comps[c][i] * s);
  }
  return DeformationField(dims, std::move(values));
}

// -- style ---------------------------------------------------------------------

Volume style_transform(const Volume& v, Modality domain, const StyleParams& style, const LabelMap* labels) {
  if (v.units() != Units::Normalized) throw ValidationError("style_transform expects normalized input");
  if (domain != Modality::Source && domain != Modality::Target) throw ParameterError("unknown domain tag");
  const IntensityLut& lut = domain == Modality::Source ? style.source_lut : style.target_lut;
  lut.validate();
  if (labels && labels->dims != v.dims()) throw DimensionError("label map dims differ from volume");
  const bool enhance = domain == Modality::Source && labels != nullptr && style.enhancement != 0.0;
  std::vector<float> out(v.voxels().size());
  const bool identity = lut.is_identity();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double y = identity ? v.voxels()[i] : lut(v.voxels()[i]);
    if (enhance) {
      const int label = labels->labels[i];
      if (label >= 2 && label < 2 + style.enhanced_organs) y += style.enhancement;
    }
    out[i] = static_cast<float>(std::clamp(y, -1.0, 1.0));
  }
  return Volume(v.dims(), v.spacing(), std::move(out), Units::Normalized, domain);
}

// -- anatomy -------------------------------------------------------------------

LabelMap generate_anatomy(const PhantomConfig& cfg, std::uint64_t seed, std::vector<double>* organ_intensity) {
  cfg.validate();
  const Dims& d = cfg.dims;
  Rng rng = make_rng(seed, "anatomy");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const double ext[3] = {static_cast<double>(d.d), static_cast<double>(d.h), static_cast<double>(d.w)};

  double body_c[3], body_r[3];
  for (int a = 0; a < 3; ++a) {
    body_c[a] = 0.5 * (ext[a] - 1.0) + uniform(-0.03, 0.03) * ext[a];
    body_r[a] = uniform(0.36, 0.46) * ext[a];
  }

  struct Organ {
    double c[3];
    double r[3];
    double angle;
  };
  std::uniform_int_distribution<int> count_dist(cfg.organ_count_min, cfg.organ_count_max);
  const int count = count_dist(rng);
  std::vector<Organ> organs(count);
  if (organ_intensity) organ_intensity->clear();
  for (auto& o : organs) {
    // Centre: uniform point of the inner body ellipsoid (55% radius).
    double p[3];
    do {
      for (double& q : p) q = uniform(-1.0, 1.0);
    } while (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0);
    for (int a = 0; a < 3; ++a) {
      o.c[a] = body_c[a] + 0.55 * p[a] * body_r[a];
      o.r[a] = std::max(2.0, uniform(0.08, 0.2) * ext[a]);
    }
    o.angle = uniform(0.0, std::numbers::pi);
    const double intensity = uniform(cfg.organ_intensity_lo, cfg.organ_intensity_hi);
    if (organ_intensity) organ_intensity->push_back(intensity);
  }

  LabelMap map{d, std::vector<std::uint8_t>(d.voxels(), 0)};
  for (int z = 0; z < d.d; ++z)
    for (int y = 0; y < d.h; ++y)
      for (int x = 0; x < d.w; ++x) {
        const double bz = (z - body_c[0]) / body_r[0];
        const double by = (y - body_c[1]) / body_r[1];
        const double bx = (x - body_c[2]) / body_r[2];
        if (bz * bz + by * by + bx * bx > 1.0) continue;
        std::uint8_t label = 1;
        for (int i = 0; i < count; ++i) {
          const Organ& o = organs[i];
          const double dz = z - o.c[0];
          const double dy0 = y - o.c[1];
          const double dx0 = x - o.c[2];
          // In-plane rotation about the z axis.
          const double dy = std::cos(o.angle) * dy0 + std::sin(o.angle) * dx0;
          const double dx = -std::sin(o.angle) * dy0 + std::cos(o.angle) * dx0;
          const double q = (dz / o.r[0]) * (dz / o.r[0]) + (dy / o.r[1]) * (dy / o.r[1]) + (dx / o.r[2]) * (dx / o.r[2]);
          if (q <= 1.0) label = static_cast<std::uint8_t>(2 + i);
        }
        map.labels[d.index(z, y, x)] = label;
      }
  return map;
}

PhantomPair generate_phantom_pair(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<double> organ_intensity;
  LabelMap labels = generate_anatomy(cfg, seed, &organ_intensity);
  const Dims& d = cfg.dims;

  std::vector<float> canonical(d.voxels());
  std::vector<std::uint8_t> body(d.voxels());
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const int l = labels.labels[i];
    canonical[i] = static_cast<float>(l == 0 ? -1.0 : (l == 1 ? cfg.body_intensity : organ_intensity[l - 2]));
    body[i] = l > 0 ? 1 : 0;
  }
  const Volume anatomy(d, {}, std::move(canonical), Units::Normalized, Modality::Target);
  Volume source = style_transform(anatomy, Modality::Source, cfg.style, &labels);
  Volume target_aligned = style_transform(anatomy, Modality::Target, cfg.style, &labels);

  DeformationField field = [&] {
    if (cfg.translation) {
      const auto& t = *cfg.translation;
      return DeformationField::constant(d, static_cast<float>(t[0]), static_cast<float>(t[1]),
                                        static_cast<float>(t[2]));
    }
    return random_smooth_field(d, cfg.misalign_amplitude, cfg.misalign_sigma, substream_seed(seed, "field"));
  }();
  Volume target_misaligned = warp(target_aligned, field);

  // Self-consistency: the label is exactly the warped ground truth.
  const Volume check = warp(target_aligned, field);
  for (std::size_t i = 0; i < check.voxels().size(); ++i) {
    if (std::abs(check.voxels()[i] - target_misaligned.voxels()[i]) >= 1e-5f) {
      throw ValidationError("phantom self-consistency check failed");
    }
  }

  return PhantomPair{std::move(source),     std::move(target_aligned), std::move(target_misaligned),
                     std::move(field),      Mask(d, std::move(body)),  std::move(labels),
                     seed};
}

// -- datasets -------------------------------------------------------------------

const char* to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "train";
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ManifestError("unknown split '" + s + "'");
}

}  // namespace

SplitCounts SplitCounts::proportional(int count) {
  if (count < 1) throw ParameterError("dataset count must be >= 1");
  SplitCounts c;
  c.test = static_cast<int>(std::lround(count * 10.0 / 55.0));
  c.val = static_cast<int>(std::lround(count * 5.0 / 55.0));
  c.train = count - c.test - c.val;
  if (c.train < 1) {
    c.train = 1;
    c.test = std::max(0, count - 1 - c.val);
    c.val = count - 1 - c.test;
  }
  return c;
}

std::vector<CaseEntry> DatasetManifest::split(Split s) const {
  std::vector<CaseEntry> out;
  for (const auto& c : cases) {
    if (c.split == s) out.push_back(c);
  }
  return out;
}

DatasetManifest write_phantom_dataset(const std::filesystem::path& out, const PhantomConfig& cfg, std::uint64_t seed,
                                      SplitCounts counts) {
  cfg.validate();
  if (counts.train < 0 || counts.val < 0 || counts.test < 0 || counts.total() < 1) {
    throw ParameterError("invalid split counts");
  }
  std::filesystem::create_directories(out);
  DatasetManifest m;
  m.root = out;
  m.seed = seed;
  json cases = json::array();
  for (int i = 0; i < counts.total(); ++i) {
    CaseEntry c;
    char id[32];
    std::snprintf(id, sizeof id, "case_%03d", i);
    c.id = id;
    c.split = i < counts.train ? Split::Train : (i < counts.train + counts.val ? Split::Val : Split::Test);
    c.seed = substream_seed(seed, "case/" + std::to_string(i));
    c.dir = c.id;
    const PhantomPair p = generate_phantom_pair(cfg, c.seed);
    const auto dir = out / c.dir;
    std::filesystem::create_directories(dir);
    save_volume(p.source, dir / "source.mivol");
    save_volume(p.target_aligned, dir / "target_aligned.mivol");
    save_volume(p.target_misaligned, dir / "target_misaligned.mivol");
    save_mask(p.mask, dir / "mask.mivol");
    save_field(p.true_field, dir, "field");
    cases.push_back({{"id", c.id},
                     {"split", to_string(c.split)},
                     {"seed", c.seed},
                     {"source", c.id + "/source.mivol"},
                     {"target_aligned", c.id + "/target_aligned.mivol"},
                     {"target_misaligned", c.id + "/target_misaligned.mivol"},
                     {"mask", c.id + "/mask.mivol"},
                     {"field", {c.id + "/field_z.mivol", c.id + "/field_y.mivol", c.id + "/field_x.mivol"}}});
    m.cases.push_back(c);
  }
  json j;
  j["seed"] = seed;
  j["dims"] = {cfg.dims.d, cfg.dims.h, cfg.dims.w};
  j["amplitude"] = cfg.misalign_amplitude;
  j["sigma"] = cfg.misalign_sigma;
  if (cfg.translation) j["translation"] = *cfg.translation;
  j["splits"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  j["cases"] = cases;
  std::ofstream os(out / "manifest.json");
  if (!os) throw IoError("cannot write manifest in " + out.string());
  os << j.dump(2) << "\n";
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.json");
  if (!is) throw ManifestError("missing manifest.json in " + root.string());
  json j;
  try {
    j = json::parse(is);
    DatasetManifest m;
    m.root = root;
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("cases")) {
      CaseEntry e;
      e.id = c.at("id").get<std::string>();
      e.split = parse_split(c.at("split").get<std::string>());
      e.seed = c.at("seed").get<std::uint64_t>();
      e.dir = std::filesystem::path(c.at("source").get<std::string>()).parent_path();
      m.cases.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
}

CaseVolumes load_case(const DatasetManifest& m, const CaseEntry& c) {
  const auto dir = m.case_dir(c);
  return CaseVolumes{load_volume(dir / "source.mivol"), load_volume(dir / "target_aligned.mivol"),
                     load_volume(dir / "target_misaligned.mivol"), load_mask(dir / "mask.mivol")};
}

}  // namespace regsyn
