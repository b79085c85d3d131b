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

#include "regsyn/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "regsyn/error.hpp"

namespace regsyn {

using nlohmann::json;

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << dims.d << "x" << dims.h << "x" << dims.w;
  return os.str();
}

const char* to_string(Units u) { return u == Units::HU ? "HU" : "NORM"; }
const char* to_string(Modality m) { return m == Modality::Source ? "SOURCE" : "TARGET"; }

namespace {

void check_dims(const Dims& dims) {
  if (!dims.positive()) throw ValidationError("non-positive dims " + to_string(dims));
}

void check_spacing(const Spacing& s) {
  if (!(s.z > 0 && s.y > 0 && s.x > 0) || !std::isfinite(s.z) || !std::isfinite(s.y) ||
      !std::isfinite(s.x)) {
    throw ValidationError("spacing components must be positive and finite");
  }
}

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> voxels, Units units,
               Modality modality)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)), units_(units), modality_(modality) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (voxels_.size() != dims_.voxels()) {
    throw ValidationError("voxel count " + std::to_string(voxels_.size()) + " does not match dims " +
                          to_string(dims_));
  }
  for (std::size_t i = 0; i < voxels_.size(); ++i) {
    const float v = voxels_[i];
    if (!std::isfinite(v)) throw ValidationError("non-finite voxel at index " + std::to_string(i));
    if (units_ == Units::Normalized && (v < -1.0f || v > 1.0f)) {
      throw ValidationError("normalized voxel outside [-1, 1] at index " + std::to_string(i));
    }
  }
}

Volume Volume::filled(Dims dims, float value, Units units, Modality modality, Spacing spacing) {
  check_dims(dims);
  return Volume(dims, spacing, std::vector<float>(dims.voxels(), value), units, modality);
}

Volume Volume::with_voxels(std::vector<float> voxels) const {
  return Volume(dims_, spacing_, std::move(voxels), units_, modality_);
}

Volume Volume::with_voxels(std::vector<float> voxels, Units units) const {
  return Volume(dims_, spacing_, std::move(voxels), units, modality_);
}

Volume Volume::with_modality(Modality modality) const {
  Volume out = *this;
  out.modality_ = modality;
  return out;
}

Mask::Mask(Dims dims, std::vector<std::uint8_t> voxels, Spacing spacing)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (voxels_.size() != dims_.voxels()) throw ValidationError("mask voxel count does not match dims");
  for (auto& v : voxels_) {
    if (v > 1) throw ValidationError("mask voxels must be 0 or 1");
  }
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(voxels_.begin(), voxels_.end(), std::uint8_t{1}));
}

// -- MIVOL ------------------------------------------------------------------

namespace {

struct Header {
  Dims dims;
  Spacing spacing;
  std::string dtype;
  Units units = Units::Normalized;
  Modality modality = Modality::Source;
};

std::string encode_header(const Header& h) {
  // nlohmann::json orders object keys, so the bytes are deterministic.
  json j;
  j["dims"] = {h.dims.d, h.dims.h, h.dims.w};
  j["spacing"] = {h.spacing.z, h.spacing.y, h.spacing.x};
  j["dtype"] = h.dtype;
  j["units"] = to_string(h.units);
  j["modality"] = to_string(h.modality);
  return j.dump();
}

void write_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

std::string serialize(const Header& h, std::span<const std::uint8_t> payload) {
  const std::string header = encode_header(h);
  std::string out(kMivolMagic);
  write_u64le(out, header.size());
  out += header;
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  return out;
}

/// Parses magic and header; returns the header and the payload offset.
std::pair<Header, std::size_t> parse_header(const std::string& bytes, const std::filesystem::path& path) {
  constexpr std::size_t kPrefix = kMivolMagic.size() + 8;
  if (bytes.size() < kMivolMagic.size() || bytes.compare(0, kMivolMagic.size(), kMivolMagic) != 0) {
    throw FormatError("bad magic in " + path.string());
  }
  if (bytes.size() < kPrefix) throw CorruptionError("truncated header length in " + path.string());
  const std::uint64_t len =
      read_u64le(reinterpret_cast<const unsigned char*>(bytes.data()) + kMivolMagic.size());
  if (len > bytes.size() - kPrefix) throw CorruptionError("header length exceeds file size in " + path.string());
  json j;
  try {
    j = json::parse(bytes.substr(kPrefix, len));
  } catch (const json::exception& e) {
    throw FormatError("header is not valid JSON in " + path.string() + ": " + e.what());
  }
  Header h;
  try {
    const auto& d = j.at("dims");
    const auto& s = j.at("spacing");
    if (d.size() != 3 || s.size() != 3) throw FormatError("dims/spacing must have 3 entries");
    h.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    h.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    h.dtype = j.at("dtype").get<std::string>();
    const auto units = j.at("units").get<std::string>();
    const auto modality = j.at("modality").get<std::string>();
    if (units == "HU") {
      h.units = Units::HU;
    } else if (units == "NORM") {
      h.units = Units::Normalized;
    } else {
      throw FormatError("unknown units '" + units + "'");
    }
    if (modality == "SOURCE") {
      h.modality = Modality::Source;
    } else if (modality == "TARGET") {
      h.modality = Modality::Target;
    } else {
      throw FormatError("unknown modality '" + modality + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed header in " + path.string() + ": " + e.what());
  }
  check_dims(h.dims);
  return {h, kPrefix + len};
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
  std::vector<std::uint8_t> payload(v.voxels().size() * 4);
  std::size_t k = 0;
  for (float f : v.voxels()) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) payload[k++] = static_cast<std::uint8_t>((u >> (8 * i)) & 0xff);
  }
  write_file(path, serialize({v.dims(), v.spacing(), "f32le", v.units(), v.modality()}, payload));
}

Volume load_volume(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto [h, offset] = parse_header(bytes, path);
  if (h.dtype != "f32le") throw FormatError("expected dtype f32le in " + path.string());
  const std::size_t n = h.dims.voxels();
  if (bytes.size() - offset != n * 4) {
    throw CorruptionError("payload holds " + std::to_string((bytes.size() - offset) / 4.0) +
                          " floats, header declares " + std::to_string(n) + " in " + path.string());
  }
  std::vector<float> voxels(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    voxels[i] = std::bit_cast<float>(u);
  }
  return Volume(h.dims, h.spacing, std::move(voxels), h.units, h.modality);
}

void save_mask(const Mask& m, const std::filesystem::path& path) {
  write_file(path, serialize({m.dims(), m.spacing(), "u8", Units::Normalized, Modality::Target}, m.voxels()));
}

Mask load_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto [h, offset] = parse_header(bytes, path);
  if (h.dtype != "u8") throw FormatError("expected dtype u8 in " + path.string());
  const std::size_t n = h.dims.voxels();
  if (bytes.size() - offset != n) throw CorruptionError("mask payload size mismatch in " + path.string());
  std::vector<std::uint8_t> voxels(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return Mask(h.dims, std::move(voxels), h.spacing);
}

// -- Intensity -------------------------------------------------------------

Volume normalize_intensity(const Volume& v, double lo, double hi) {
  if (!(lo < hi)) throw ParameterError("normalization window requires lo < hi");
  if (v.units() != Units::HU) throw ValidationError("normalize_intensity expects HU input");
  std::vector<float> out(v.voxels().size());
  std::transform(v.voxels().begin(), v.voxels().end(), out.begin(), [&](float x) {
    const double c = std::clamp(static_cast<double>(x), lo, hi);
    return static_cast<float>(std::clamp(2.0 * (c - lo) / (hi - lo) - 1.0, -1.0, 1.0));
  });
  return v.with_voxels(std::move(out), Units::Normalized);
}

Volume denormalize_intensity(const Volume& v, double lo, double hi) {
  if (!(lo < hi)) throw ParameterError("normalization window requires lo < hi");
  if (v.units() != Units::Normalized) throw ValidationError("denormalize_intensity expects normalized input");
  std::vector<float> out(v.voxels().size());
  const double half = 0.5 * (hi - lo);
  std::transform(v.voxels().begin(), v.voxels().end(), out.begin(),
                 [&](float x) { return static_cast<float>(lo + (static_cast<double>(x) + 1.0) * half); });
  return v.with_voxels(std::move(out), Units::HU);
}

// -- Body mask ---------------------------------------------------------------

namespace {

// Fills background regions of one axial slice that are not 4-connected to the
// slice border.
void fill_slice_holes(std::vector<std::uint8_t>& mask, const Dims& dims, int z) {
  const int h = dims.h;
  const int w = dims.w;
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(h) * w, 0);
  std::deque<std::pair<int, int>> queue;
  auto at = [&](int y, int x) -> std::uint8_t& { return mask[dims.index(z, y, x)]; };
  auto seed = [&](int y, int x) {
    const std::size_t k = static_cast<std::size_t>(y) * w + x;
    if (!at(y, x) && !outside[k]) {
      outside[k] = 1;
      queue.emplace_back(y, x);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  while (!queue.empty()) {
    auto [y, x] = queue.front();
    queue.pop_front();
    if (y > 0) seed(y - 1, x);
    if (y + 1 < h) seed(y + 1, x);
    if (x > 0) seed(y, x - 1);
    if (x + 1 < w) seed(y, x + 1);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!outside[static_cast<std::size_t>(y) * w + x]) at(y, x) = 1;
    }
  }
}

}  // namespace

Mask compute_body_mask(const Volume& v, double threshold) {
  if (v.units() != Units::HU) throw ValidationError("compute_body_mask expects HU input");
  const Dims& dims = v.dims();
  const std::size_t n = dims.voxels();
  std::vector<int> label(n, 0);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (label[start] != 0 || !(v.voxels()[start] > threshold)) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t k = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(k % dims.w);
      const int y = static_cast<int>((k / dims.w) % dims.h);
      const int z = static_cast<int>(k / (static_cast<std::size_t>(dims.w) * dims.h));
      const std::array<std::array<int, 3>, 6> nbrs{{{z - 1, y, x}, {z + 1, y, x}, {z, y - 1, x},
                                                    {z, y + 1, x}, {z, y, x - 1}, {z, y, x + 1}}};
      for (const auto& [nz, ny, nx] : nbrs) {
        if (nz < 0 || ny < 0 || nx < 0 || nz >= dims.d || ny >= dims.h || nx >= dims.w) continue;
        const std::size_t m = dims.index(nz, ny, nx);
        if (label[m] == 0 && v.voxels()[m] > threshold) {
          label[m] = id;
          stack.push_back(m);
        }
      }
    }
    sizes.push_back(size);
  }
  if (sizes.size() == 1) throw EmptyMaskError("no voxel above threshold " + std::to_string(threshold));
  // Ties resolve to the component discovered first in raster order.
  const int best = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t k = 0; k < n; ++k) mask[k] = label[k] == best ? 1 : 0;
  for (int z = 0; z < dims.d; ++z) fill_slice_holes(mask, dims, z);
  return Mask(dims, std::move(mask), v.spacing());
}

// -- Patches -----------------------------------------------------------------

namespace {

void check_patch(const Dims& dims, Index3 o, Dims size) {
  const bool ok = size.positive() && o.z >= 0 && o.y >= 0 && o.x >= 0 && o.z + size.d <= dims.d &&
                  o.y + size.h <= dims.h && o.x + size.w <= dims.w;
  if (!ok) {
    throw BoundsError("patch at (" + std::to_string(o.z) + "," + std::to_string(o.y) + "," +
                      std::to_string(o.x) + ") of size " + to_string(size) + " exceeds " + to_string(dims));
  }
}

template <class T>
std::vector<T> copy_patch(std::span<const T> src, const Dims& dims, Index3 o, Dims size) {
  std::vector<T> out;
  out.reserve(size.voxels());
  for (int z = 0; z < size.d; ++z) {
    for (int y = 0; y < size.h; ++y) {
      const auto begin = src.begin() + static_cast<std::ptrdiff_t>(dims.index(o.z + z, o.y + y, o.x));
      out.insert(out.end(), begin, begin + size.w);
    }
  }
  return out;
}

}  // namespace

Volume extract_patch(const Volume& v, Index3 origin, Dims size) {
  check_patch(v.dims(), origin, size);
  return Volume(size, v.spacing(), copy_patch(v.voxels(), v.dims(), origin, size), v.units(), v.modality());
}

Mask extract_patch(const Mask& m, Index3 origin, Dims size) {
  check_patch(m.dims(), origin, size);
  return Mask(size, copy_patch(m.voxels(), m.dims(), origin, size), m.spacing());
}

}  // namespace regsyn
