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

#include "regsyn/model.hpp"

#include "regsyn/convert.hpp"

namespace regsyn {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Bef:
      return "BEF";
    case Variant::Aft:
      return "AFT";
    case Variant::Both:
      return "BOTH";
    case Variant::BothAcds:
      return "BOTH+ACDS";
    case Variant::Baseline:
      return "BASELINE";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "BEF") return Variant::Bef;
  if (s == "AFT") return Variant::Aft;
  if (s == "BOTH") return Variant::Both;
  if (s == "BOTH+ACDS") return Variant::BothAcds;
  if (s == "BASELINE") return Variant::Baseline;
  throw ConfigError("unknown variant '" + s + "' (expected BEF, AFT, BOTH, BOTH+ACDS or BASELINE)");
}

namespace {

void require_normalized(const Volume& v, const char* what) {
  if (v.units() != Units::Normalized) throw ValidationError(std::string(what) + " must be in normalized units");
}

}  // namespace

DeformationField predict_field(Model<float>& model, const Volume& source, const Volume& target) {
  require_normalized(source, "registration source");
  require_normalized(target, "registration target");
  if (source.dims() != target.dims()) throw DimensionError("registration pair differs in dims");
  NoGradGuard<float> guard(model.params());
  return var_to_field(model.predict_field(volume_to_var<float>(source), volume_to_var<float>(target)));
}

Volume synthesize_s2t(Model<float>& model, const Volume& source) {
  require_normalized(source, "synthesis input");
  NoGradGuard<float> guard(model.params());
  const auto out = model.synthesize_s2t(volume_to_var<float>(source));
  return var_to_volume(out, 0, Units::Normalized, Modality::Target, source.spacing());
}

Volume synthesize_t2s(Model<float>& model, const Volume& target) {
  require_normalized(target, "synthesis input");
  NoGradGuard<float> guard(model.params());
  const auto out = model.synthesize_t2s(volume_to_var<float>(target));
  return var_to_volume(out, 0, Units::Normalized, Modality::Source, target.spacing());
}

}  // namespace regsyn
