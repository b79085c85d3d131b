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

#include "regsyn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "regsyn/rng.hpp"

namespace regsyn {

GradCheckReport finite_difference_check(const std::function<ad::Var<double>()>& objective,
                                        std::vector<ad::Var<double>> wrt, const GradCheckOptions& options) {
  for (auto& v : wrt) {
    v.set_requires_grad(true);
    v.zero_grad();
  }
  const ad::Var<double> root = objective();
  ad::backward(root);

  std::vector<std::vector<double>> analytic;
  for (auto& v : wrt) {
    std::vector<double> g(v.size(), 0.0);
    if (!v.grad().empty()) std::copy(v.grad().begin(), v.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  auto evaluate = [&](std::uint64_t* signature) {
    std::uint64_t sig = 0xcbf29ce484222325ULL;
    if (options.skip_kinks) ad::kinks::sink = &sig;
    double value = 0.0;
    try {
      value = objective().item();
    } catch (...) {
      ad::kinks::sink = nullptr;
      throw;
    }
    ad::kinks::sink = nullptr;
    *signature = sig;
    return value;
  };
  std::uint64_t base = 0;
  if (options.skip_kinks) evaluate(&base);

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    auto& v = wrt[t];
    std::vector<std::size_t> coords(v.size());
    std::iota(coords.begin(), coords.end(), 0);
    const bool subset = options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor;
    if (subset) std::shuffle(coords.begin(), coords.end(), rng);
    const std::size_t wanted = subset ? options.max_coords_per_tensor : coords.size();
    std::size_t done = 0;
    for (std::size_t k = 0; k < coords.size() && done < wanted; ++k) {
      const std::size_t i = coords[k];
      auto values = v.mutable_value();
      const double saved = values[i];
      double h = options.step, plus = 0.0, minus = 0.0;
      bool clean = false;
      while (true) {
        std::uint64_t sig_plus = 0, sig_minus = 0;
        values[i] = saved + h;
        plus = evaluate(&sig_plus);
        values[i] = saved - h;
        minus = evaluate(&sig_minus);
        values[i] = saved;
        clean = !options.skip_kinks || (sig_plus == base && sig_minus == base);
        if (clean || options.min_step <= 0.0 || h / 10.0 < options.min_step * (1.0 - 1e-9)) break;
        h /= 10.0;
      }
      if (!clean) {
        ++report.skipped;
        continue;
      }
      report.smallest_step = report.coordinates == 0 ? h : std::min(report.smallest_step, h);
      ++done;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        std::ostringstream os;
        os << "tensor " << t << "[" << i << "]: analytic " << a << " vs numeric " << numeric;
        report.worst = os.str();
      }
      ++report.coordinates;
    }
  }
  report.passed = report.coordinates > 0 && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace regsyn
