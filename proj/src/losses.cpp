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

#include "regsyn/losses.hpp"

#include <cmath>
#include <sstream>

namespace regsyn {

void LossWeights::validate() const {
  for (double v : {anatomy, smooth, align}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and nonnegative");
  }
}

bool LossReport::finite() const {
  for (double v : {adv, self, cycle, anatomy, smooth, align, total, d_loss}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string LossReport::describe() const {
  std::ostringstream os;
  os.precision(9);
  os << "adv=" << adv << " self=" << self << " cycle=" << cycle << " anatomy=" << anatomy << " smooth=" << smooth
     << " align=" << align << " total=" << total << " d_loss=" << d_loss;
  return os.str();
}

LossReport total_loss(const LossReport& c, const LossWeights& w) {
  w.validate();
  for (double v : {c.adv, c.self, c.cycle, c.anatomy, c.smooth, c.align}) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite loss component: " + c.describe());
  }
  LossReport r = c;
  r.total = c.adv + c.self + c.cycle + w.anatomy * c.anatomy + w.smooth * c.smooth + w.align * c.align;
  return r;
}

const char* to_string(AdvForm f) { return f == AdvForm::LeastSquares ? "lsgan" : "logistic"; }

AdvForm parse_adv_form(const std::string& s) {
  if (s == "lsgan" || s == "least_squares") return AdvForm::LeastSquares;
  if (s == "logistic" || s == "log") return AdvForm::Logistic;
  throw ConfigError("unknown adv_form '" + s + "' (expected lsgan or logistic)");
}

}  // namespace regsyn
