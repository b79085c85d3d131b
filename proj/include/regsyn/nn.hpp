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

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regsyn/error.hpp"
#include "regsyn/ops.hpp"
#include "regsyn/rng.hpp"

namespace regsyn::nn {

using ad::Shape;
using ad::Var;

enum class Init { KaimingUniform, Zeros, Ones, StandardNormal };

/// Named, shape-fixed trainable tensors. Each tensor is initialized from its
/// own substream of the init seed (keyed by name), so a tensor's initial
/// values do not depend on construction order.
///
/// Forward passes fetch tensors through `use()`, which records the name
/// while a trace is active.
template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    Init init;
  };

  explicit ParameterSet(std::uint64_t init_seed = 0) : init_seed_(init_seed) {}
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  std::size_t add(const std::string& name, Shape shape, Init init, int fan_in = 1) {
    if (index_.count(name)) throw ParameterError("duplicate parameter name " + name);
    const std::size_t n = ad::numel(shape);
    std::vector<T> values(n, T(0));
    Rng rng(substream_seed(init_seed_, name));
    switch (init) {
      case Init::KaimingUniform: {
        const double bound = std::sqrt(6.0 / std::max(fan_in, 1));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : values) v = static_cast<T>(u(rng));
        break;
      }
      case Init::StandardNormal: {
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& v : values) v = static_cast<T>(g(rng));
        break;
      }
      case Init::Ones:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case Init::Zeros:
        break;
    }
    entries_.push_back({name, Var<T>::leaf(std::move(shape), std::move(values), true), init});
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
  }

  Var<T> use(std::size_t id) const {
    const Entry& e = entries_.at(id);
    if (trace_) trace_->insert(e.name);
    return e.var;
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  Entry& entry(std::size_t id) { return entries_.at(id); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }
  void set_requires_grad(const std::function<bool(const std::string&)>& select, bool on) {
    for (auto& e : entries_) {
      if (select(e.name)) e.var.set_requires_grad(on);
    }
  }
  bool all_finite() const {
    for (const auto& e : entries_) {
      for (T v : e.var.value()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  void begin_trace() const { trace_.emplace(); }
  std::set<std::string> end_trace() const {
    std::set<std::string> out = trace_ ? std::move(*trace_) : std::set<std::string>{};
    trace_.reset();
    return out;
  }

 private:
  std::uint64_t init_seed_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  mutable std::optional<std::set<std::string>> trace_;
};

/// Scales a nominal channel width, never below 1.
inline int scaled(int channels, double scale) {
  return std::max(1, static_cast<int>(std::lround(channels * scale)));
}

// -- layers -----------------------------------------------------------------------

template <class T>
struct Conv3d {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in = 0;
  int out = 0;
  int stride = 1;

  static Conv3d make(ParameterSet<T>& ps, const std::string& name, int in, int out, int k, int stride,
                     Init init = Init::KaimingUniform) {
    Conv3d c;
    c.in = in;
    c.out = out;
    c.stride = stride;
    c.weight = ps.add(name + ".weight", {out, in, k, k, k}, init, in * k * k * k);
    c.bias = ps.add(name + ".bias", {out}, Init::Zeros);
    return c;
  }
  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x) const {
    return ad::conv3d(x, ps.use(weight), ps.use(bias), stride);
  }
};

template <class T>
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Linear make(ParameterSet<T>& ps, const std::string& name, int in, int out,
                     Init init = Init::KaimingUniform) {
    Linear l;
    l.weight = ps.add(name + ".weight", {out, in}, init, in);
    l.bias = ps.add(name + ".bias", {out}, Init::Zeros);
    return l;
  }
  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x) const {
    return ad::linear(x, ps.use(weight), ps.use(bias));
  }
};

/// Instance normalization followed by a per-channel scale and shift. The
/// scale/shift are either learned tensors (plain) or produced from a style
/// code by two learned affine maps (adaptive instance modulation).
template <class T>
struct Norm {
  bool adaptive = false;
  int channels = 0;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  Linear<T> to_gamma;
  Linear<T> to_beta;

  static Norm make(ParameterSet<T>& ps, const std::string& name, int channels, int style_dim) {
    Norm n;
    n.channels = channels;
    n.adaptive = style_dim > 0;
    if (n.adaptive) {
      // gamma = 1 + A s, beta = B s
      n.to_gamma = Linear<T>::make(ps, name + ".style_gamma", style_dim, channels);
      n.to_beta = Linear<T>::make(ps, name + ".style_beta", style_dim, channels);
    } else {
      n.gamma = ps.add(name + ".gamma", {1, channels}, Init::Ones);
      n.beta = ps.add(name + ".beta", {1, channels}, Init::Zeros);
    }
    return n;
  }

  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x, const Var<T>* style) const {
    const Var<T> xn = ad::instance_norm(x);
    if (!adaptive) {
      if (style) throw ParameterError("style supplied to a normalization layer without modulation");
      return ad::channel_affine(xn, ps.use(gamma), ps.use(beta));
    }
    if (!style) throw ParameterError("modulated normalization layer requires a style code");
    return ad::channel_affine(xn, ad::add_scalar(to_gamma(ps, *style), T(1)), to_beta(ps, *style));
  }
};

/// Conv(k=3) -> IN (+affine) -> ReLU, with optional nearest 2x upsampling in front.
template <class T>
struct ConvInRelu {
  Conv3d<T> conv;
  Norm<T> norm;
  bool upsample = false;

  static ConvInRelu make(ParameterSet<T>& ps, const std::string& name, int in, int out, int stride,
                         bool upsample = false) {
    ConvInRelu b;
    b.conv = Conv3d<T>::make(ps, name, in, out, 3, stride);
    b.norm = Norm<T>::make(ps, name + ".norm", out, 0);
    b.upsample = upsample;
    return b;
  }
  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x) const {
    const Var<T> in = upsample ? ad::upsample_nearest2(x) : x;
    return ad::relu(norm(ps, conv(ps, in), nullptr));
  }
};

/// x + norm2(conv2(relu(norm1(conv1(x))))). With style_dim > 0 both norms
/// are style-modulated.
template <class T>
struct ResidualBlock {
  Conv3d<T> conv1;
  Conv3d<T> conv2;
  Norm<T> norm1;
  Norm<T> norm2;

  static ResidualBlock make(ParameterSet<T>& ps, const std::string& name, int channels, int style_dim = 0) {
    ResidualBlock r;
    r.conv1 = Conv3d<T>::make(ps, name + ".conv1", channels, channels, 3, 1);
    r.norm1 = Norm<T>::make(ps, name + ".norm1", channels, style_dim);
    r.conv2 = Conv3d<T>::make(ps, name + ".conv2", channels, channels, 3, 1);
    r.norm2 = Norm<T>::make(ps, name + ".norm2", channels, style_dim);
    return r;
  }
  bool modulated() const { return norm1.adaptive; }

  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x, const Var<T>* style = nullptr) const {
    Var<T> h = ad::relu(norm1(ps, conv1(ps, x), style));
    h = norm2(ps, conv2(ps, h), style);
    return ad::add(x, h);
  }
};

/// Three fully connected layers with ReLU between them.
template <class T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;
  Linear<T> fc3;
  int out_dim = 0;

  static Mlp make(ParameterSet<T>& ps, const std::string& name, int in, int hidden, int out) {
    Mlp m;
    m.fc1 = Linear<T>::make(ps, name + ".fc1", in, hidden);
    m.fc2 = Linear<T>::make(ps, name + ".fc2", hidden, hidden);
    m.fc3 = Linear<T>::make(ps, name + ".fc3", hidden, out);
    m.out_dim = out;
    return m;
  }
  Var<T> operator()(const ParameterSet<T>& ps, const Var<T>& x) const {
    return fc3(ps, ad::relu(fc2(ps, ad::relu(fc1(ps, x)))));
  }
};

}  // namespace regsyn::nn
