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

#include <array>
#include <string>
#include <vector>

#include "regsyn/nn.hpp"
#include "regsyn/volume.hpp"

namespace regsyn {

/// Domain of an image or network: SOURCE (S) or TARGET (T).
using Domain = Modality;

struct AcdsConfig {
  double channel_scale = 1.0;
  int style_dim = 64;
  int code_dim = 8;
  // false: single encoder-decoder path (E_c^s -> G_t) without style
  // modulation, used by the reduced ablation variants and the baseline.
  bool disentangled = true;
};

/// 3 Conv-IN-ReLU blocks (k3, stride 2; 32, 64, 128 channels) followed by
/// four residual blocks. Output: 128 channels at 1/8 resolution.
template <class T>
struct ContentEncoder {
  std::array<nn::ConvInRelu<T>, 3> down;
  std::array<nn::ResidualBlock<T>, 4> res;
  int channels = 0;

  static ContentEncoder make(nn::ParameterSet<T>& ps, const std::string& name, double scale) {
    ContentEncoder e;
    const int c1 = nn::scaled(32, scale), c2 = nn::scaled(64, scale), c3 = nn::scaled(128, scale);
    e.down[0] = nn::ConvInRelu<T>::make(ps, name + ".conv1", 1, c1, 2);
    e.down[1] = nn::ConvInRelu<T>::make(ps, name + ".conv2", c1, c2, 2);
    e.down[2] = nn::ConvInRelu<T>::make(ps, name + ".conv3", c2, c3, 2);
    for (int i = 0; i < 4; ++i) e.res[i] = nn::ResidualBlock<T>::make(ps, name + ".res" + std::to_string(i + 1), c3);
    e.channels = c3;
    return e;
  }

  ad::Var<T> operator()(const nn::ParameterSet<T>& ps, const ad::Var<T>& x) const {
    const auto& s = x.shape();
    if (s.size() != 5 || s[1] != 1) throw DimensionError("content encoder expects {N,1,D,H,W}");
    for (int i = 2; i < 5; ++i) {
      if (s[i] % 8 != 0) throw DimensionError("content encoder input dims must be multiples of 8");
    }
    ad::Var<T> h = x;
    for (const auto& b : down) h = b(ps, h);
    for (const auto& r : res) h = r(ps, h);
    return h;
  }
};

/// Three-layer MLP from the 8-dim domain code to the style vector.
template <class T>
struct StyleEncoder {
  nn::Mlp<T> mlp;

  static StyleEncoder make(nn::ParameterSet<T>& ps, const std::string& name, int code_dim, int style_dim) {
    return StyleEncoder{nn::Mlp<T>::make(ps, name, code_dim, style_dim, style_dim)};
  }
  ad::Var<T> operator()(const nn::ParameterSet<T>& ps, const ad::Var<T>& code) const { return mlp(ps, code); }
};

/// Four residual blocks (style-modulated when style_dim > 0), three
/// upsampling Conv-IN-ReLU blocks (64, 32, 32 channels), 3^3 conv to one
/// channel, tanh.
template <class T>
struct Decoder {
  std::array<nn::ResidualBlock<T>, 4> res;
  std::array<nn::ConvInRelu<T>, 3> up;
  nn::Conv3d<T> out;
  int channels = 0;
  bool styled = false;

  static Decoder make(nn::ParameterSet<T>& ps, const std::string& name, double scale, int style_dim) {
    Decoder g;
    const int c0 = nn::scaled(128, scale), c1 = nn::scaled(64, scale), c2 = nn::scaled(32, scale),
              c3 = nn::scaled(32, scale);
    for (int i = 0; i < 4; ++i)
      g.res[i] = nn::ResidualBlock<T>::make(ps, name + ".res" + std::to_string(i + 1), c0, style_dim);
    g.up[0] = nn::ConvInRelu<T>::make(ps, name + ".up1", c0, c1, 1, true);
    g.up[1] = nn::ConvInRelu<T>::make(ps, name + ".up2", c1, c2, 1, true);
    g.up[2] = nn::ConvInRelu<T>::make(ps, name + ".up3", c2, c3, 1, true);
    g.out = nn::Conv3d<T>::make(ps, name + ".out", c3, 1, 3, 1);
    g.channels = c0;
    g.styled = style_dim > 0;
    return g;
  }

  ad::Var<T> operator()(const nn::ParameterSet<T>& ps, const ad::Var<T>& content, const ad::Var<T>* style) const {
    if (content.shape().size() != 5 || content.dim(1) != channels) {
      throw DimensionError("decoder expects " + std::to_string(channels) + "-channel content, got " +
                           ad::shape_string(content.shape()));
    }
    ad::Var<T> h = content;
    for (const auto& r : res) h = r(ps, h, style);
    for (const auto& u : up) h = u(ps, h);
    return ad::tanh(out(ps, h));
  }
};

/// Two-scale 3D patch discriminator: per scale four stride-2 convs
/// (32..256 channels, leaky ReLU 0.2) and a 3^3 conv to one realness channel.
/// The second scale sees the input average-pooled by 2.
template <class T>
struct PatchDiscriminator {
  struct Scale {
    std::array<nn::Conv3d<T>, 4> convs;
    nn::Conv3d<T> head;
  };
  std::array<Scale, 2> scales;

  static PatchDiscriminator make(nn::ParameterSet<T>& ps, const std::string& name, double scale) {
    PatchDiscriminator d;
    const int widths[4] = {nn::scaled(32, scale), nn::scaled(64, scale), nn::scaled(128, scale),
                           nn::scaled(256, scale)};
    for (int s = 0; s < 2; ++s) {
      const std::string base = name + ".scale" + std::to_string(s + 1);
      int in = 1;
      for (int i = 0; i < 4; ++i) {
        d.scales[s].convs[i] = nn::Conv3d<T>::make(ps, base + ".conv" + std::to_string(i + 1), in, widths[i], 3, 2);
        in = widths[i];
      }
      d.scales[s].head = nn::Conv3d<T>::make(ps, base + ".head", in, 1, 3, 1);
    }
    return d;
  }

  std::vector<ad::Var<T>> operator()(const nn::ParameterSet<T>& ps, const ad::Var<T>& x) const {
    std::vector<ad::Var<T>> out;
    ad::Var<T> input = x;
    for (int s = 0; s < 2; ++s) {
      if (s > 0) input = ad::avg_pool2(input);
      ad::Var<T> h = input;
      for (const auto& c : scales[s].convs) h = ad::leaky_relu(c(ps, h), T(0.2));
      out.push_back(scales[s].head(ps, h));
    }
    return out;
  }
};

/// Realness maps of one discriminator, one per scale.
template <class T>
using RealnessMaps = std::vector<ad::Var<T>>;

/// The anatomy-consistency disentanglement synthesizer: content encoders
/// E_c^s/E_c^t, style encoders E_s^s/E_s^t over learned domain codes d_s/d_t,
/// generators G_s/G_t and discriminators D_s/D_t. In the reduced
/// (non-disentangled) form only E_c^s, G_t (unmodulated) and D_t exist.
///
/// Parameter names: e_c_s.*, e_c_t.*, e_s_s.*, e_s_t.*, d_s, d_t, g_s.*,
/// g_t.*, disc_s.*, disc_t.*.
template <class T>
class Acds {
 public:
  static Acds make(nn::ParameterSet<T>& ps, const AcdsConfig& cfg) {
    Acds a;
    a.cfg_ = cfg;
    const double sc = cfg.channel_scale;
    if (!(sc > 0.0)) throw ParameterError("channel scale must be positive");
    a.e_c_s_ = ContentEncoder<T>::make(ps, "e_c_s", sc);
    a.g_t_ = Decoder<T>::make(ps, "g_t", sc, cfg.disentangled ? cfg.style_dim : 0);
    a.disc_t_ = PatchDiscriminator<T>::make(ps, "disc_t", sc);
    if (cfg.disentangled) {
      a.e_c_t_ = ContentEncoder<T>::make(ps, "e_c_t", sc);
      a.e_s_s_ = StyleEncoder<T>::make(ps, "e_s_s", cfg.code_dim, cfg.style_dim);
      a.e_s_t_ = StyleEncoder<T>::make(ps, "e_s_t", cfg.code_dim, cfg.style_dim);
      a.code_s_ = ps.add("d_s", {1, cfg.code_dim}, nn::Init::StandardNormal);
      a.code_t_ = ps.add("d_t", {1, cfg.code_dim}, nn::Init::StandardNormal);
      a.g_s_ = Decoder<T>::make(ps, "g_s", sc, cfg.style_dim);
      a.disc_s_ = PatchDiscriminator<T>::make(ps, "disc_s", sc);
    }
    return a;
  }

  const AcdsConfig& config() const { return cfg_; }
  bool disentangled() const { return cfg_.disentangled; }

  /// c = E_c^domain(image), 1/8 resolution.
  ad::Var<T> encode_content(const nn::ParameterSet<T>& ps, const ad::Var<T>& image, Domain domain) const {
    if (domain == Domain::Source) return e_c_s_(ps, image);
    require_disentangled("target content encoder");
    return e_c_t_(ps, image);
  }

  /// s = E_s^domain(d_domain).
  ad::Var<T> encode_style(const nn::ParameterSet<T>& ps, Domain domain) const {
    require_disentangled("style encoder");
    return domain == Domain::Source ? e_s_s_(ps, ps.use(code_s_)) : e_s_t_(ps, ps.use(code_t_));
  }

  /// G_domain(content, style). `style` must be null for the reduced form.
  ad::Var<T> decode(const nn::ParameterSet<T>& ps, const ad::Var<T>& content, const ad::Var<T>* style,
                    Domain domain) const {
    if (domain == Domain::Target) return g_t_(ps, content, style);
    require_disentangled("source generator");
    return g_s_(ps, content, style);
  }

  /// O_t = G_t(E_c^s(I_s), E_s^t(d_t)); the test-time path.
  ad::Var<T> synthesize_s2t(const nn::ParameterSet<T>& ps, const ad::Var<T>& source) const {
    const ad::Var<T> content = encode_content(ps, source, Domain::Source);
    if (!cfg_.disentangled) return decode(ps, content, nullptr, Domain::Target);
    const ad::Var<T> style = encode_style(ps, Domain::Target);
    return decode(ps, content, &style, Domain::Target);
  }

  /// O_s = G_s(E_c^t(I_t), E_s^s(d_s)).
  ad::Var<T> synthesize_t2s(const nn::ParameterSet<T>& ps, const ad::Var<T>& target) const {
    require_disentangled("target-to-source synthesis");
    const ad::Var<T> content = encode_content(ps, target, Domain::Target);
    const ad::Var<T> style = encode_style(ps, Domain::Source);
    return decode(ps, content, &style, Domain::Source);
  }

  RealnessMaps<T> discriminate(const nn::ParameterSet<T>& ps, const ad::Var<T>& image, Domain domain) const {
    if (domain == Domain::Target) return disc_t_(ps, image);
    require_disentangled("source discriminator");
    return disc_s_(ps, image);
  }

 private:
  void require_disentangled(const char* what) const {
    if (!cfg_.disentangled) throw ParameterError(std::string(what) + " is not part of the reduced synthesizer");
  }

  AcdsConfig cfg_;
  ContentEncoder<T> e_c_s_, e_c_t_;
  StyleEncoder<T> e_s_s_, e_s_t_;
  Decoder<T> g_s_, g_t_;
  PatchDiscriminator<T> disc_s_, disc_t_;
  std::size_t code_s_ = 0, code_t_ = 0;
};

/// True for parameters of the discriminators D_s, D_t.
inline bool is_discriminator_param(const std::string& name) { return name.rfind("disc_", 0) == 0; }

}  // namespace regsyn
