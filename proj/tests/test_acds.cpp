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

#include "regsyn/acds.hpp"
#include "regsyn/convert.hpp"
#include "regsyn/model.hpp"
#include "test_util.hpp"

using namespace regsyn;
using ad::Shape;
using VarF = ad::Var<float>;

namespace {

struct Fixture {
  explicit Fixture(double scale = 0.25, bool disentangled = true) : ps(11) {
    AcdsConfig c;
    c.channel_scale = scale;
    c.disentangled = disentangled;
    acds = Acds<float>::make(ps, c);
  }
  nn::ParameterSet<float> ps;
  Acds<float> acds;
};

}  // namespace

TEST_SUITE("acds") {
  TEST_CASE("content latent shapes") {
    Fixture f(1.0);
    CHECK(f.acds.encode_content(f.ps, testing::random_const<float>({1, 1, 64, 64, 64}, 1), Domain::Source).shape() ==
          Shape{1, 128, 8, 8, 8});
    CHECK(f.acds.encode_content(f.ps, testing::random_const<float>({1, 1, 32, 32, 32}, 2), Domain::Target).shape() ==
          Shape{1, 128, 4, 4, 4});
    CHECK_THROWS_AS(f.acds.encode_content(f.ps, testing::random_const<float>({1, 1, 20, 32, 32}, 2), Domain::Source),
                    DimensionError);
  }

  TEST_CASE("style codes are deterministic with the configured length") {
    Fixture f;
    const VarF a = f.acds.encode_style(f.ps, Domain::Target);
    const VarF b = f.acds.encode_style(f.ps, Domain::Target);
    CHECK(a.shape() == Shape{1, 64});
    CHECK(std::equal(a.value().begin(), a.value().end(), b.value().begin()));
    const VarF s = f.acds.encode_style(f.ps, Domain::Source);
    CHECK_FALSE(std::equal(a.value().begin(), a.value().end(), s.value().begin()));
  }

  TEST_CASE("decoder output size and range; style changes the output") {
    Fixture f;
    const VarF content = f.acds.encode_content(f.ps, testing::random_const<float>({1, 1, 16, 16, 16}, 3), Domain::Source);
    const VarF s_t = f.acds.encode_style(f.ps, Domain::Target);
    const VarF s_s = f.acds.encode_style(f.ps, Domain::Source);
    const VarF a = f.acds.decode(f.ps, content, &s_t, Domain::Target);
    const VarF b = f.acds.decode(f.ps, content, &s_s, Domain::Target);
    CHECK(a.shape() == Shape{1, 1, 16, 16, 16});
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.value()[i] >= -1.0f);
      CHECK(a.value()[i] <= 1.0f);
      diff = std::max(diff, double(std::abs(a.value()[i] - b.value()[i])));
    }
    CHECK(diff > 0.0);
  }

  TEST_CASE("synthesis equals the manual composition bitwise, both directions") {
    Fixture f;
    const VarF x = testing::random_const<float>({1, 1, 16, 16, 16}, 4);
    const VarF o_t = f.acds.synthesize_s2t(f.ps, x);
    const VarF s_t = f.acds.encode_style(f.ps, Domain::Target);
    const VarF manual_t = f.acds.decode(f.ps, f.acds.encode_content(f.ps, x, Domain::Source), &s_t, Domain::Target);
    CHECK(o_t.shape() == x.shape());
    CHECK(std::equal(o_t.value().begin(), o_t.value().end(), manual_t.value().begin()));

    const VarF o_s = f.acds.synthesize_t2s(f.ps, x);
    const VarF s_s = f.acds.encode_style(f.ps, Domain::Source);
    const VarF manual_s = f.acds.decode(f.ps, f.acds.encode_content(f.ps, x, Domain::Target), &s_s, Domain::Source);
    CHECK(o_s.shape() == x.shape());
    CHECK(std::equal(o_s.value().begin(), o_s.value().end(), manual_s.value().begin()));
  }

  TEST_CASE("discriminator realness grids") {
    Fixture f;
    const auto maps = f.acds.discriminate(f.ps, testing::random_const<float>({2, 1, 32, 32, 32}, 5), Domain::Target);
    REQUIRE(maps.size() == 2);
    CHECK(maps[0].shape() == Shape{2, 1, 2, 2, 2});  // 32 / 16
    CHECK(maps[1].shape() == Shape{2, 1, 1, 1, 1});  // pooled input 16 / 16
    for (const auto& m : maps)
      for (float v : m.value()) CHECK(std::isfinite(v));
  }

  TEST_CASE("reduced synthesizer has only the source-to-target path") {
    Fixture f(0.25, false);
    const VarF x = testing::random_const<float>({1, 1, 16, 16, 16}, 6);
    CHECK(f.acds.synthesize_s2t(f.ps, x).shape() == x.shape());
    CHECK_THROWS_AS(f.acds.synthesize_t2s(f.ps, x), ParameterError);
    CHECK_THROWS_AS(f.acds.encode_style(f.ps, Domain::Target), ParameterError);
    CHECK_FALSE(f.ps.find("g_s.out.weight").has_value());
    CHECK_FALSE(f.ps.find("disc_s.scale1.head.weight").has_value());
    CHECK(f.ps.find("disc_t.scale1.head.weight").has_value());
  }

  TEST_CASE("parameter naming and discriminator partition") {
    Fixture f;
    CHECK(f.ps.find("d_s").has_value());
    CHECK(f.ps.find("d_t").has_value());
    CHECK(f.ps.entry(*f.ps.find("d_t")).var.shape() == Shape{1, 8});
    for (const auto& e : f.ps.entries()) {
      const bool disc = is_discriminator_param(e.name);
      CHECK(disc == (e.name.starts_with("disc_s.") || e.name.starts_with("disc_t.")));
    }
  }

  TEST_CASE("the source-to-target path reads only E_c^s, E_s^t, d_t and G_t") {
    Fixture f;
    f.ps.begin_trace();
    (void)f.acds.synthesize_s2t(f.ps, testing::random_const<float>({1, 1, 16, 16, 16}, 7));
    for (const auto& name : f.ps.end_trace()) {
      INFO(name);
      CHECK((name.starts_with("e_c_s.") || name.starts_with("e_s_t.") || name == "d_t" || name.starts_with("g_t.")));
    }
  }
}
