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
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "regsyn/autodiff.hpp"
#include "regsyn/volume.hpp"

namespace regsyn::testing {

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("regsyn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::vector<float> uniform_floats(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> uniform_doubles(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Volume random_volume(Dims d, std::uint64_t seed, Units units = Units::Normalized) {
  const float lo = units == Units::HU ? -1000.0f : -1.0f;
  const float hi = units == Units::HU ? 1000.0f : 1.0f;
  return Volume(d, {}, uniform_floats(d.voxels(), seed, lo, hi), units, Modality::Source);
}

template <class T>
ad::Var<T> random_leaf(ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const auto vals = uniform_doubles(ad::numel(shape), seed, lo, hi);
  return ad::Var<T>::leaf(std::move(shape), std::vector<T>(vals.begin(), vals.end()), true);
}

template <class T>
ad::Var<T> random_const(ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const auto vals = uniform_doubles(ad::numel(shape), seed, lo, hi);
  return ad::Var<T>::constant(std::move(shape), std::vector<T>(vals.begin(), vals.end()));
}

}  // namespace regsyn::testing
