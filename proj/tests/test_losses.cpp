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

#include <cmath>

#include "regsyn/gradcheck.hpp"
#include "regsyn/losses.hpp"
#include "test_util.hpp"

using namespace regsyn;
using ad::Shape;
using VarD = ad::Var<double>;

namespace {

// Stand-in synthesizer: content = image, style ignored, decode = content.
// Makes the composed losses reduce to plain L1 terms.
struct IdentityNet {
  VarD encode_content(int, const VarD& x, Domain) const { return x; }
  VarD encode_style(int, Domain) const { return VarD::scalar(0.0); }
  VarD decode(int, const VarD& c, const VarD*, Domain) const { return c; }
};

VarD filled(Shape s, double v) { return VarD::constant(s, std::vector<double>(ad::numel(s), v)); }

VarD offset(const VarD& x, double by) { return ad::add_scalar(x, by); }

double l1_oracle(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / a.size();
}

RealnessMaps<double> maps(double v) { return {filled({1, 1, 2, 2, 2}, v), filled({1, 1, 1, 1, 1}, v)}; }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("alignment loss: zero when identical, 0.1 for a constant offset") {
    const VarD t = testing::random_const<double>({1, 1, 4, 4, 4}, 1);
    CHECK(alignment_loss(t, t, t).item() == 0.0);
    const VarD after = offset(t, 0.1);
    CHECK(alignment_loss(t, after, t).item() == doctest::Approx(0.1).epsilon(1e-12));
    const VarD a = testing::random_const<double>({1, 1, 4, 4, 4}, 2);
    const VarD b = testing::random_const<double>({1, 1, 4, 4, 4}, 3);
    CHECK(alignment_loss(a, b, t).item() ==
          doctest::Approx(l1_oracle(a.value(), t.value()) + l1_oracle(b.value(), t.value())).epsilon(1e-12));
  }

  TEST_CASE("self reconstruction with an identity synthesizer is zero") {
    const IdentityNet net;
    const VarD s = testing::random_const<double>({1, 1, 4, 4, 4}, 4);
    const VarD t = testing::random_const<double>({1, 1, 4, 4, 4}, 5);
    CHECK(self_reconstruction_loss(net, 0, s, t).item() == 0.0);
  }

  TEST_CASE("cycle consistency: zero for exact round trips, 0.1 for an offset translation") {
    const IdentityNet net;
    const VarD s = testing::random_const<double>({1, 1, 4, 4, 4}, 6);
    const VarD t = testing::random_const<double>({1, 1, 4, 4, 4}, 7);
    // With identity maps, o_t is mapped straight back to the source side.
    CHECK(cycle_consistency_loss(net, 0, s, t, /*o_s=*/t, /*o_t=*/s).item() == 0.0);
    CHECK(cycle_consistency_loss(net, 0, s, t, t, offset(s, 0.1)).item() == doctest::Approx(0.1).epsilon(1e-12));
  }

  TEST_CASE("anatomy consistency: zero, 0.2 case and brute force") {
    const VarD cs = testing::random_const<double>({1, 4, 2, 2, 2}, 8);
    const VarD ct = testing::random_const<double>({1, 4, 2, 2, 2}, 9);
    CHECK(anatomy_consistency_from_latents(cs, cs, ct, ct).item() == 0.0);
    CHECK(anatomy_consistency_from_latents(offset(cs, 0.1), cs, offset(ct, -0.1), ct).item() ==
          doctest::Approx(0.2).epsilon(1e-12));
    const VarD a = testing::random_const<double>({1, 4, 2, 2, 2}, 10);
    const VarD b = testing::random_const<double>({1, 4, 2, 2, 2}, 11);
    CHECK(anatomy_consistency_from_latents(a, cs, b, ct).item() ==
          doctest::Approx(l1_oracle(a.value(), cs.value()) + l1_oracle(b.value(), ct.value())).epsilon(1e-12));
    const IdentityNet net;
    CHECK(anatomy_consistency_loss(net, 0, cs, ct, ct, cs).item() == 0.0);
  }

  TEST_CASE("least-squares adversarial trivial cases") {
    // Perfect discriminator.
    CHECK(adversarial_loss<double>({maps(1.0)}, {maps(0.0)}, AdvRole::Discriminator).item() == 0.0);
    // Generator that fools it.
    CHECK(adversarial_loss<double>({}, {maps(1.0)}, AdvRole::Generator).item() == 0.0);
    // Undecided discriminator: 0.25 + 0.25.
    CHECK(adversarial_loss<double>({maps(0.5)}, {maps(0.5)}, AdvRole::Discriminator).item() ==
          doctest::Approx(0.5).epsilon(1e-12));
    // Domains add up.
    CHECK(adversarial_loss<double>({maps(0.5), maps(0.5)}, {maps(0.5), maps(0.5)}, AdvRole::Discriminator).item() ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(adversarial_loss<double>({}, {maps(0.0)}, AdvRole::Generator).item() == doctest::Approx(1.0));
  }

  TEST_CASE("adversarial brute force over scales") {
    const RealnessMaps<double> real = {testing::random_const<double>({2, 1, 2, 2, 2}, 12),
                                       testing::random_const<double>({2, 1, 1, 1, 1}, 13)};
    const RealnessMaps<double> fake = {testing::random_const<double>({2, 1, 2, 2, 2}, 14),
                                       testing::random_const<double>({2, 1, 1, 1, 1}, 15)};
    auto mean_of = [](const VarD& v, auto f) {
      double s = 0.0;
      for (double x : v.value()) s += f(x);
      return s / v.size();
    };
    auto sq = [](double t) { return [t](double x) { return (x - t) * (x - t); }; };
    auto sp = [](double sign) { return [sign](double x) { return std::log1p(std::exp(sign * x)); }; };
    double d_ls = 0.0, g_ls = 0.0, d_log = 0.0, g_log = 0.0;
    for (int s = 0; s < 2; ++s) {
      d_ls += 0.5 * (mean_of(real[s], sq(1.0)) + mean_of(fake[s], sq(0.0)));
      g_ls += 0.5 * mean_of(fake[s], sq(1.0));
      d_log += 0.5 * (mean_of(real[s], sp(-1.0)) + mean_of(fake[s], sp(1.0)));
      g_log += 0.5 * mean_of(fake[s], sp(-1.0));
    }
    CHECK(adversarial_loss<double>({real}, {fake}, AdvRole::Discriminator).item() == doctest::Approx(d_ls).epsilon(1e-12));
    CHECK(adversarial_loss<double>({}, {fake}, AdvRole::Generator).item() == doctest::Approx(g_ls).epsilon(1e-12));
    CHECK(adversarial_loss<double>({real}, {fake}, AdvRole::Discriminator, AdvForm::Logistic).item() ==
          doctest::Approx(d_log).epsilon(1e-12));
    CHECK(adversarial_loss<double>({}, {fake}, AdvRole::Generator, AdvForm::Logistic).item() ==
          doctest::Approx(g_log).epsilon(1e-12));
  }

  TEST_CASE("adversarial argument validation and form parsing") {
    CHECK_THROWS_AS(adversarial_loss<double>({}, {}, AdvRole::Generator), ParameterError);
    CHECK_THROWS_AS(adversarial_loss<double>({}, {maps(0.0)}, AdvRole::Discriminator), ParameterError);
    CHECK(parse_adv_form("lsgan") == AdvForm::LeastSquares);
    CHECK(parse_adv_form("logistic") == AdvForm::Logistic);
    CHECK(std::string(to_string(AdvForm::Logistic)) == "logistic");
    CHECK_THROWS_AS(parse_adv_form("wgan"), ConfigError);
  }

  TEST_CASE("weighted total: 33.5 example, zeros, homogeneity") {
    LossReport r;
    r.adv = 1.0;
    r.self = 2.0;
    r.cycle = 3.0;
    r.anatomy = 1.0;
    r.smooth = 0.2;
    r.align = 1.25;
    const LossWeights w;  // 0.5, 10, 20
    CHECK(total_loss(r, w).total == doctest::Approx(33.5).epsilon(1e-12));
    CHECK(total_loss(LossReport{}, w).total == 0.0);
    LossReport r3 = r;
    for (double* f : {&r3.adv, &r3.self, &r3.cycle, &r3.anatomy, &r3.smooth, &r3.align}) *f *= 3.0;
    CHECK(total_loss(r3, w).total == doctest::Approx(3.0 * 33.5).epsilon(1e-12));

    const VarD v = total_loss(VarD::scalar(1.0), VarD::scalar(2.0), VarD::scalar(3.0), VarD::scalar(1.0),
                              VarD::scalar(0.2), VarD::scalar(1.25), w);
    CHECK(v.item() == doctest::Approx(33.5).epsilon(1e-12));

    r.align = std::nan("");
    CHECK_THROWS_AS(total_loss(r, w), NonFiniteError);
    LossWeights bad;
    bad.smooth = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("total loss gradient matches central differences") {
    const VarD before = testing::random_leaf<double>({1, 1, 3, 3, 3}, 16);
    const VarD after = testing::random_leaf<double>({1, 1, 3, 3, 3}, 17);
    const VarD tgt = testing::random_const<double>({1, 1, 3, 3, 3}, 18);
    const VarD flow = testing::random_leaf<double>({1, 3, 3, 3, 3}, 19);
    const VarD ca = testing::random_leaf<double>({1, 2, 2, 2, 2}, 20);
    const VarD cb = testing::random_const<double>({1, 2, 2, 2, 2}, 21);
    const VarD fake = testing::random_leaf<double>({1, 1, 2, 2, 2}, 22);
    const LossWeights w;
    auto objective = [&] {
      const VarD adv = adversarial_loss<double>({}, {{fake}}, AdvRole::Generator);
      const VarD anatomy = anatomy_consistency_from_latents(ca, cb, ca, cb);
      return total_loss(adv, ad::l1(before, tgt), ad::l1(after, tgt), anatomy, ad::gradient_energy(flow),
                        alignment_loss(before, after, tgt), w);
    };
    GradCheckOptions o;
    o.step = 1e-6;  // keep clear of the L1 kinks
    const auto r = finite_difference_check(objective, {before, after, flow, ca, fake}, o);
    INFO(r.worst);
    CHECK(r.passed);
  }
}
