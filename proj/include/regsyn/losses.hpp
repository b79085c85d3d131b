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

#include <string>
#include <vector>

#include "regsyn/acds.hpp"
#include "regsyn/ops.hpp"

namespace regsyn {

struct LossWeights {
  double anatomy = 0.5;  // lambda_1
  double smooth = 10.0;  // lambda_2
  double align = 20.0;   // lambda_3

  void validate() const;
};

/// Generator-side objective terms and their weighted total; d_loss is the
/// discriminator objective of the same step (not part of the total).
struct LossReport {
  double adv = 0.0;
  double self = 0.0;
  double cycle = 0.0;
  double anatomy = 0.0;
  double smooth = 0.0;
  double align = 0.0;
  double total = 0.0;
  double d_loss = 0.0;

  bool finite() const;
  std::string describe() const;
};

/// total = adv + self + cycle + l1*anatomy + l2*smooth + l3*align.
LossReport total_loss(const LossReport& components, const LossWeights& w);

template <class T>
ad::Var<T> total_loss(const ad::Var<T>& adv, const ad::Var<T>& self, const ad::Var<T>& cycle,
                      const ad::Var<T>& anatomy, const ad::Var<T>& smooth, const ad::Var<T>& align,
                      const LossWeights& w) {
  return ad::weighted_sum<T>({{T(1), adv},
                              {T(1), self},
                              {T(1), cycle},
                              {static_cast<T>(w.anatomy), anatomy},
                              {static_cast<T>(w.smooth), smooth},
                              {static_cast<T>(w.align), align}});
}

/// ||O_t^b - I_t||_1 + ||O_t^a - I_t||_1 with voxel-mean L1.
template <class T>
ad::Var<T> alignment_loss(const ad::Var<T>& before, const ad::Var<T>& after, const ad::Var<T>& target) {
  return ad::add(ad::l1(before, target), ad::l1(after, target));
}

// The composed losses below accept any network exposing the Acds interface
// (encode_content, encode_style, decode) together with its parameters.

/// ||G_s(E_c^s(I_s), E_s^s(d_s)) - I_s||_1 + ||G_t(E_c^t(I_t), E_s^t(d_t)) - I_t||_1
template <class Net, class Params, class T>
ad::Var<T> self_reconstruction_loss(const Net& acds, const Params& ps, const ad::Var<T>& source,
                                    const ad::Var<T>& target) {
  const auto s_s = acds.encode_style(ps, Domain::Source);
  const auto s_t = acds.encode_style(ps, Domain::Target);
  const auto rec_s = acds.decode(ps, acds.encode_content(ps, source, Domain::Source), &s_s, Domain::Source);
  const auto rec_t = acds.decode(ps, acds.encode_content(ps, target, Domain::Target), &s_t, Domain::Target);
  return ad::add(ad::l1(rec_s, source), ad::l1(rec_t, target));
}

/// Cycle term from the content codes of the translations:
/// ||G_s(c(O_t), s_s) - I_s||_1 + ||G_t(c(O_s), s_t) - I_t||_1.
template <class Net, class Params, class T>
ad::Var<T> cycle_consistency_from_latents(const Net& acds, const Params& ps,
                                          const ad::Var<T>& source, const ad::Var<T>& target,
                                          const ad::Var<T>& content_of_ot, const ad::Var<T>& content_of_os,
                                          const ad::Var<T>& style_s, const ad::Var<T>& style_t) {
  const auto back_s = acds.decode(ps, content_of_ot, &style_s, Domain::Source);
  const auto back_t = acds.decode(ps, content_of_os, &style_t, Domain::Target);
  return ad::add(ad::l1(back_s, source), ad::l1(back_t, target));
}

template <class Net, class Params, class T>
ad::Var<T> cycle_consistency_loss(const Net& acds, const Params& ps, const ad::Var<T>& source,
                                  const ad::Var<T>& target, const ad::Var<T>& o_s, const ad::Var<T>& o_t) {
  return cycle_consistency_from_latents(acds, ps, source, target, acds.encode_content(ps, o_t, Domain::Target),
                                        acds.encode_content(ps, o_s, Domain::Source),
                                        acds.encode_style(ps, Domain::Source), acds.encode_style(ps, Domain::Target));
}

/// ||E_c^t(O_t) - E_c^s(I_s)||_1 + ||E_c^s(O_s) - E_c^t(I_t)||_1 over latent entries.
template <class T>
ad::Var<T> anatomy_consistency_from_latents(const ad::Var<T>& content_of_ot, const ad::Var<T>& content_s,
                                            const ad::Var<T>& content_of_os, const ad::Var<T>& content_t) {
  return ad::add(ad::l1(content_of_ot, content_s), ad::l1(content_of_os, content_t));
}

template <class Net, class Params, class T>
ad::Var<T> anatomy_consistency_loss(const Net& acds, const Params& ps, const ad::Var<T>& source,
                                    const ad::Var<T>& target, const ad::Var<T>& o_s, const ad::Var<T>& o_t) {
  return anatomy_consistency_from_latents(
      acds.encode_content(ps, o_t, Domain::Target), acds.encode_content(ps, source, Domain::Source),
      acds.encode_content(ps, o_s, Domain::Source), acds.encode_content(ps, target, Domain::Target));
}

enum class AdvForm { LeastSquares, Logistic };
enum class AdvRole { Generator, Discriminator };

const char* to_string(AdvForm f);
AdvForm parse_adv_form(const std::string& s);

/// Adversarial objective over one or more domains. `reals[d]` / `fakes[d]`
/// are the per-scale realness maps of domain d; scales are averaged and
/// domains summed.
///   least squares, discriminator: mean (D(real) - 1)^2 + mean D(fake)^2
///   least squares, generator:     mean (D(fake) - 1)^2
///   logistic, discriminator:      softplus(-D(real)) + softplus(D(fake))
///   logistic, generator:          softplus(-D(fake))
/// In the discriminator role the fake maps must come from detached images.
template <class T>
ad::Var<T> adversarial_loss(const std::vector<RealnessMaps<T>>& reals, const std::vector<RealnessMaps<T>>& fakes,
                            AdvRole role, AdvForm form = AdvForm::LeastSquares) {
  if (fakes.empty()) throw ParameterError("adversarial loss needs fake realness maps");
  if (role == AdvRole::Discriminator && reals.size() != fakes.size()) {
    throw ParameterError("discriminator role needs one real map set per fake map set");
  }
  std::vector<std::pair<T, ad::Var<T>>> terms;
  for (std::size_t d = 0; d < fakes.size(); ++d) {
    const T w = T(1) / static_cast<T>(fakes[d].size());
    for (std::size_t s = 0; s < fakes[d].size(); ++s) {
      const auto& fake = fakes[d][s];
      if (role == AdvRole::Discriminator) {
        const auto& real = reals[d].at(s);
        if (form == AdvForm::LeastSquares) {
          terms.emplace_back(w, ad::mean_sq_to(real, T(1)));
          terms.emplace_back(w, ad::mean_sq_to(fake, T(0)));
        } else {
          terms.emplace_back(w, ad::mean_softplus(real, T(-1)));
          terms.emplace_back(w, ad::mean_softplus(fake, T(1)));
        }
      } else {
        terms.emplace_back(w, form == AdvForm::LeastSquares ? ad::mean_sq_to(fake, T(1))
                                                            : ad::mean_softplus(fake, T(-1)));
      }
    }
  }
  return ad::weighted_sum(terms);
}

}  // namespace regsyn
