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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "regsyn/autodiff.hpp"

namespace regsyn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;  // coordinates with no kink-free step down to min_step
  double smallest_step = 0.0;
  bool passed = false;
  std::string worst;  // "tensor[index]: analytic vs numeric"
};

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  // Relative errors use max(|analytic|, |numeric|, floor) as denominator.
  double abs_floor = 1e-8;
  // A +-step perturbation that moves any ReLU, |x| or interpolation-cell
  // decision is retried at step/10 down to min_step (0: no retries); if still
  // straddling, the coordinate is skipped and the next candidate used.
  bool skip_kinks = true;
  double min_step = 0.0;
};

/// Compares the reverse-mode gradient of a scalar objective against central
/// differences. `objective` must rebuild its graph from the current values of
/// the `wrt` leaves on every call; those leaves are perturbed in place and
/// restored.
GradCheckReport finite_difference_check(const std::function<ad::Var<double>()>& objective,
                                        std::vector<ad::Var<double>> wrt, const GradCheckOptions& options = {});

}  // namespace regsyn
