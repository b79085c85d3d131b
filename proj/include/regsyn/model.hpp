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
#include <optional>
#include <string>

#include "regsyn/acds.hpp"
#include "regsyn/registration.hpp"

namespace regsyn {

/// Training variants. BEF keeps only the synthesis-before-registration
/// branch, AFT only synthesis-after-registration, BOTH keeps both, BOTH+ACDS
/// adds the disentangled synthesizer and anatomy consistency. BASELINE is the
/// paired-L1 + adversarial reference without registration.
enum class Variant { Bef, Aft, Both, BothAcds, Baseline };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

inline bool uses_registration(Variant v) { return v != Variant::Baseline; }
inline bool uses_acds(Variant v) { return v == Variant::BothAcds; }

struct ModelConfig {
  Variant variant = Variant::BothAcds;
  double channel_scale = 1.0;
  int style_dim = 64;
  std::uint64_t seed = 0;
};

/// Owns every trainable tensor of one run (synthesizer, discriminators and,
/// when the variant uses it, the registration network).
template <class T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg)
      : cfg_(cfg), params_(substream_seed(cfg.seed, "init")) {
    AcdsConfig ac;
    ac.channel_scale = cfg.channel_scale;
    ac.style_dim = cfg.style_dim;
    ac.disentangled = uses_acds(cfg.variant);
    acds_ = Acds<T>::make(params_, ac);
    if (uses_registration(cfg.variant)) reg_ = RegistrationNet<T>::make(params_, "reg", cfg.channel_scale);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  const Acds<T>& acds() const { return acds_; }
  bool has_registration() const { return reg_.has_value(); }

  /// phi = R_Phi(I_s, I_t), {N, 3, D, H, W}.
  ad::Var<T> predict_field(const ad::Var<T>& source, const ad::Var<T>& target) const {
    if (!reg_) throw ParameterError(std::string("variant ") + to_string(cfg_.variant) + " has no registration network");
    return (*reg_)(params_, source, target);
  }

  ad::Var<T> synthesize_s2t(const ad::Var<T>& source) const { return acds_.synthesize_s2t(params_, source); }
  ad::Var<T> synthesize_t2s(const ad::Var<T>& target) const { return acds_.synthesize_t2s(params_, target); }

 private:
  ModelConfig cfg_;
  nn::ParameterSet<T> params_;
  Acds<T> acds_;
  std::optional<RegistrationNet<T>> reg_;
};

/// Disables gradient recording on all parameters for its lifetime, so
/// forward passes do not retain their graphs.
template <class T>
class NoGradGuard {
 public:
  explicit NoGradGuard(nn::ParameterSet<T>& ps) : ps_(ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      saved_.push_back(ps.entry(i).var.requires_grad());
      ps.entry(i).var.set_requires_grad(false);
    }
  }
  ~NoGradGuard() {
    for (std::size_t i = 0; i < saved_.size(); ++i) ps_.entry(i).var.set_requires_grad(saved_[i]);
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  nn::ParameterSet<T>& ps_;
  std::vector<bool> saved_;
};

// Volume-level conveniences (float models, no gradient recording).

/// Registration of a normalized pair; dims must be multiples of 16.
DeformationField predict_field(Model<float>& model, const Volume& source, const Volume& target);
/// O_t for a normalized source volume (dims multiples of 8); output normalized.
Volume synthesize_s2t(Model<float>& model, const Volume& source);
/// O_s for a normalized target volume.
Volume synthesize_t2s(Model<float>& model, const Volume& target);

}  // namespace regsyn
