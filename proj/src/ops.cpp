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

#include "regsyn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <sstream>

#include "regsyn/error.hpp"

namespace regsyn::ad {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "}";
  return os.str();
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <class T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

template <class T>
void require_grid(const Var<T>& x, const char* op) {
  require(x.shape().size() == 5, std::string(op) + ": expected {N,C,D,H,W}, got " + shape_string(x.shape()));
}

template <class T>
void record_signs(const Var<T>& a) {
  if (!kinks::sink) return;
  for (T x : a.value()) kinks::record(x > T(0));
}

// Sequential sum: vectorized reductions over maps peel by address alignment,
// which would make results depend on where the allocator placed the buffer.
template <class T>
T plain_sum(const T* p, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += p[i];
  return acc;
}

// Accumulates into the gradient of input i when that input wants one.
template <class T>
T* grad_of(Node<T>& n, std::size_t i) {
  auto& in = *n.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

template <class T, class Fwd, class Bwd>
Var<T> unary(const Var<T>& a, Fwd fwd, Bwd dfdx) {
  std::vector<T> out(a.size());
  const auto av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [dfdx](Node<T>& n) {
    T* ga = grad_of(n, 0);
    if (!ga) return;
    const auto& x = n.inputs[0]->value;
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * dfdx(x[i], n.value[i]);
  });
}

struct Grid {
  int n, c, d, h, w;
  std::size_t spatial() const { return static_cast<std::size_t>(d) * h * w; }
};

template <class T>
Grid grid_of(const Var<T>& x) {
  const auto& s = x.shape();
  return {s[0], s[1], s[2], s[3], s[4]};
}

}  // namespace

// -- elementwise -------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = grad_of(n, k)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
      }
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    if (T* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    }
    if (T* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  record_signs(a);
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  record_signs(a);
  return unary(a, [slope](T x) { return x > T(0) ? x : slope * x; },
               [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.shape(), std::vector<T>(a.value().begin(), a.value().end()));
}

// -- reductions ----------------------------------------------------------------

template <class T>
Var<T> mean(const Var<T>& a) {
  require(a.size() > 0, "mean of empty tensor");
  T s = 0;
  for (T v : a.value()) s += v;
  const T inv = T(1) / static_cast<T>(a.size());
  return make_result<T>({}, {s * inv}, {a}, [inv](Node<T>& n) {
    if (T* g = grad_of(n, 0)) {
      const T gi = n.grad[0] * inv;
      for (std::size_t i = 0; i < n.inputs[0]->value.size(); ++i) g[i] += gi;
    }
  });
}

template <class T>
Var<T> l1(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "l1");
  require(a.size() > 0, "l1 of empty tensor");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
  if (kinks::sink) {
    for (std::size_t i = 0; i < a.size(); ++i) kinks::record(a.value()[i] > b.value()[i]);
  }
  const T inv = T(1) / static_cast<T>(a.size());
  return make_result<T>({}, {static_cast<T>(s) * inv}, {a, b}, [inv](Node<T>& n) {
    const auto& av = n.inputs[0]->value;
    const auto& bv = n.inputs[1]->value;
    const T gi = n.grad[0] * inv;
    T* ga = grad_of(n, 0);
    T* gb = grad_of(n, 1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
      if (ga) ga[i] += gi * sgn;
      if (gb) gb[i] -= gi * sgn;
    }
  });
}

template <class T>
Var<T> mean_sq_to(const Var<T>& a, T target) {
  require(a.size() > 0, "mean_sq_to of empty tensor");
  double s = 0;
  for (T v : a.value()) s += (static_cast<double>(v) - target) * (static_cast<double>(v) - target);
  const T inv = T(1) / static_cast<T>(a.size());
  return make_result<T>({}, {static_cast<T>(s) * inv}, {a}, [inv, target](Node<T>& n) {
    if (T* g = grad_of(n, 0)) {
      const auto& av = n.inputs[0]->value;
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += n.grad[0] * inv * T(2) * (av[i] - target);
    }
  });
}

template <class T>
Var<T> mean_softplus(const Var<T>& a, T sign, T clamp) {
  require(a.size() > 0, "mean_softplus of empty tensor");
  double s = 0;
  for (T v : a.value()) {
    const T z = std::clamp(sign * v, -clamp, clamp);
    s += std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
  }
  const T inv = T(1) / static_cast<T>(a.size());
  return make_result<T>({}, {static_cast<T>(s) * inv}, {a}, [inv, sign, clamp](Node<T>& n) {
    if (T* g = grad_of(n, 0)) {
      const auto& av = n.inputs[0]->value;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const T raw = sign * av[i];
        if (raw < -clamp || raw > clamp) continue;
        const T sig = T(1) / (T(1) + std::exp(-raw));
        g[i] += n.grad[0] * inv * sign * sig;
      }
    }
  });
}

template <class T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
  T s = 0;
  std::vector<Var<T>> inputs;
  std::vector<T> weights;
  for (const auto& [w, v] : terms) {
    require(v.size() == 1, "weighted_sum expects scalars");
    s += w * v.item();
    inputs.push_back(v);
    weights.push_back(w);
  }
  return make_result<T>({}, {s}, inputs, [weights](Node<T>& n) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (T* g = grad_of(n, k)) g[0] += n.grad[0] * weights[k];
    }
  });
}

// -- convolution -----------------------------------------------------------------

namespace {

struct ConvGeom {
  int ci, d, h, w;   // input
  int od, oh, ow;    // output
  int k, pad, stride;
  std::size_t rows() const { return static_cast<std::size_t>(ci) * k * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(od) * oh * ow; }
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t V = g.cols();
  std::size_t row = 0;
  for (int c = 0; c < g.ci; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.d * g.h * g.w;
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          T* dst = col + row * V;
          for (int oz = 0; oz < g.od; ++oz) {
            const int iz = oz * g.stride + kz - g.pad;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride + ky - g.pad;
              T* line = dst + (static_cast<std::size_t>(oz) * g.oh + oy) * g.ow;
              if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) {
                std::fill(line, line + g.ow, T(0));
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(iz) * g.h + iy) * g.w;
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * g.stride + kx - g.pad;
                line[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const std::size_t V = g.cols();
  std::size_t row = 0;
  for (int c = 0; c < g.ci; ++c) {
    T* xc = dx + static_cast<std::size_t>(c) * g.d * g.h * g.w;
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          const T* src = col + row * V;
          for (int oz = 0; oz < g.od; ++oz) {
            const int iz = oz * g.stride + kz - g.pad;
            if (iz < 0 || iz >= g.d) continue;
            for (int oy = 0; oy < g.oh; ++oy) {
              const int iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              const T* line = src + (static_cast<std::size_t>(oz) * g.oh + oy) * g.ow;
              T* dst = xc + (static_cast<std::size_t>(iz) * g.h + iy) * g.w;
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * g.stride + kx - g.pad;
                if (ix >= 0 && ix < g.w) dst[ix] += line[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride) {
  require_grid(x, "conv3d");
  const auto& ws = weight.shape();
  require(ws.size() == 5 && ws[2] == ws[3] && ws[3] == ws[4] && ws[2] % 2 == 1,
          "conv3d: weight must be {Co,Ci,k,k,k} with odd k, got " + shape_string(ws));
  const Grid in = grid_of(x);
  require(ws[1] == in.c, "conv3d: channel mismatch, input has " + std::to_string(in.c) + ", weight expects " +
                             std::to_string(ws[1]));
  require(bias.size() == static_cast<std::size_t>(ws[0]), "conv3d: bias size mismatch");
  require(stride >= 1, "conv3d: stride must be positive");
  const int co = ws[0];
  const int k = ws[2];
  ConvGeom g{in.c, in.d, in.h, in.w, (in.d + stride - 1) / stride, (in.h + stride - 1) / stride,
             (in.w + stride - 1) / stride, k, k / 2, stride};
  const std::size_t K = g.rows();
  const std::size_t V = g.cols();
  const std::size_t in_stride = static_cast<std::size_t>(in.c) * in.spatial();
  std::vector<T> out(static_cast<std::size_t>(in.n) * co * V);
  std::vector<T> col(K * V);
  Eigen::Map<const RowMat<T>> W(weight.value().data(), co, K);
  for (int n = 0; n < in.n; ++n) {
    im2col(x.value().data() + n * in_stride, g, col.data());
    Eigen::Map<const RowMat<T>> C(col.data(), K, V);
    Eigen::Map<RowMat<T>> Y(out.data() + static_cast<std::size_t>(n) * co * V, co, V);
    Y.noalias() = W * C;
    for (int o = 0; o < co; ++o) Y.row(o).array() += bias.value()[o];
  }
  return make_result<T>({in.n, co, g.od, g.oh, g.ow}, std::move(out), {x, weight, bias},
                        [g, co, in, K, V, in_stride](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    T* gw = grad_of(nd, 1);
    T* gb = grad_of(nd, 2);
    const auto& xv = nd.inputs[0]->value;
    Eigen::Map<const RowMat<T>> W(nd.inputs[1]->value.data(), co, K);
    std::vector<T> col(K * V);
    for (int n = 0; n < in.n; ++n) {
      Eigen::Map<const RowMat<T>> dY(nd.grad.data() + static_cast<std::size_t>(n) * co * V, co, V);
      if (gb) {
        for (int o = 0; o < co; ++o) gb[o] += plain_sum(dY.data() + static_cast<std::size_t>(o) * V, V);
      }
      if (gw) {
        im2col(xv.data() + n * in_stride, g, col.data());
        Eigen::Map<const RowMat<T>> C(col.data(), K, V);
        Eigen::Map<RowMat<T>> dW(gw, co, K);
        dW.noalias() += dY * C.transpose();
      }
      if (gx) {
        Eigen::Map<RowMat<T>> dC(col.data(), K, V);
        dC.noalias() = W.transpose() * dY;
        col2im_add(col.data(), g, gx + n * in_stride);
      }
    }
  });
}

// -- normalization -----------------------------------------------------------------

template <class T>
Var<T> instance_norm(const Var<T>& x, T eps) {
  require_grid(x, "instance_norm");
  const Grid g = grid_of(x);
  const std::size_t S = g.spatial();
  const std::size_t planes = static_cast<std::size_t>(g.n) * g.c;
  std::vector<T> out(x.size());
  std::vector<T> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * S;
    double m = 0;
    for (std::size_t i = 0; i < S; ++i) m += src[i];
    m /= static_cast<double>(S);
    double var = 0;
    for (std::size_t i = 0; i < S; ++i) var += (src[i] - m) * (src[i] - m);
    var /= static_cast<double>(S);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[p] = static_cast<T>(inv);
    T* dst = out.data() + p * S;
    for (std::size_t i = 0; i < S; ++i) dst[i] = static_cast<T>((src[i] - m) * inv);
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [S, planes, inv_std](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* gy = nd.grad.data() + p * S;
      const T* y = nd.value.data() + p * S;
      double mg = 0;
      double mgy = 0;
      for (std::size_t i = 0; i < S; ++i) {
        mg += gy[i];
        mgy += static_cast<double>(gy[i]) * y[i];
      }
      mg /= static_cast<double>(S);
      mgy /= static_cast<double>(S);
      T* dst = gx + p * S;
      for (std::size_t i = 0; i < S; ++i) dst[i] += static_cast<T>(inv_std[p] * (gy[i] - mg - y[i] * mgy));
    }
  });
}

template <class T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& scale_, const Var<T>& shift) {
  require_grid(x, "channel_affine");
  const Grid g = grid_of(x);
  require(scale_.shape().size() == 2 && scale_.shape() == shift.shape() && scale_.dim(1) == g.c &&
              (scale_.dim(0) == 1 || scale_.dim(0) == g.n),
          "channel_affine: scale/shift must be {1,C} or {N,C}, got " + shape_string(scale_.shape()));
  const bool per_sample = scale_.dim(0) == g.n && g.n > 1;
  const std::size_t S = g.spatial();
  std::vector<T> out(x.size());
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.c; ++c) {
      const std::size_t k = per_sample ? static_cast<std::size_t>(n) * g.c + c : static_cast<std::size_t>(c);
      const T a = scale_.value()[k];
      const T b = shift.value()[k];
      const std::size_t off = (static_cast<std::size_t>(n) * g.c + c) * S;
      for (std::size_t i = 0; i < S; ++i) out[off + i] = x.value()[off + i] * a + b;
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, scale_, shift}, [g, S, per_sample](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    T* ga = grad_of(nd, 1);
    T* gb = grad_of(nd, 2);
    const auto& xv = nd.inputs[0]->value;
    const auto& av = nd.inputs[1]->value;
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.c; ++c) {
        const std::size_t k = per_sample ? static_cast<std::size_t>(n) * g.c + c : static_cast<std::size_t>(c);
        const std::size_t off = (static_cast<std::size_t>(n) * g.c + c) * S;
        const T* gy = nd.grad.data() + off;
        T sa = 0;
        T sb = 0;
        for (std::size_t i = 0; i < S; ++i) {
          if (gx) gx[off + i] += gy[i] * av[k];
          sa += gy[i] * xv[off + i];
          sb += gy[i];
        }
        if (ga) ga[k] += sa;
        if (gb) gb[k] += sb;
      }
    }
  });
}

// -- resampling and reshaping ---------------------------------------------------------

template <class T>
Var<T> upsample_nearest2(const Var<T>& x) {
  require_grid(x, "upsample_nearest2");
  const Grid g = grid_of(x);
  const int D = 2 * g.d, H = 2 * g.h, W = 2 * g.w;
  const std::size_t planes = static_cast<std::size_t>(g.n) * g.c;
  const std::size_t So = static_cast<std::size_t>(D) * H * W;
  std::vector<T> out(planes * So);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * g.spatial();
    T* dst = out.data() + p * So;
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          dst[(static_cast<std::size_t>(z) * H + y) * W + xx] =
              src[(static_cast<std::size_t>(z / 2) * g.h + y / 2) * g.w + xx / 2];
  }
  return make_result<T>({g.n, g.c, D, H, W}, std::move(out), {x}, [g, D, H, W, planes, So](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = nd.grad.data() + p * So;
      T* dst = gx + p * g.spatial();
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx)
            dst[(static_cast<std::size_t>(z / 2) * g.h + y / 2) * g.w + xx / 2] +=
                src[(static_cast<std::size_t>(z) * H + y) * W + xx];
    }
  });
}

template <class T>
Var<T> avg_pool2(const Var<T>& x) {
  require_grid(x, "avg_pool2");
  const Grid g = grid_of(x);
  const int D = g.d / 2, H = g.h / 2, W = g.w / 2;
  require(D > 0 && H > 0 && W > 0, "avg_pool2: input too small " + shape_string(x.shape()));
  const std::size_t planes = static_cast<std::size_t>(g.n) * g.c;
  const std::size_t So = static_cast<std::size_t>(D) * H * W;
  std::vector<T> out(planes * So, T(0));
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * g.spatial();
    T* dst = out.data() + p * So;
    for (int z = 0; z < 2 * D; ++z)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx)
          dst[(static_cast<std::size_t>(z / 2) * H + y / 2) * W + xx / 2] +=
              src[(static_cast<std::size_t>(z) * g.h + y) * g.w + xx] * T(0.125);
  }
  return make_result<T>({g.n, g.c, D, H, W}, std::move(out), {x}, [g, D, H, W, planes, So](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    if (!gx) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = nd.grad.data() + p * So;
      T* dst = gx + p * g.spatial();
      for (int z = 0; z < 2 * D; ++z)
        for (int y = 0; y < 2 * H; ++y)
          for (int xx = 0; xx < 2 * W; ++xx)
            dst[(static_cast<std::size_t>(z) * g.h + y) * g.w + xx] +=
                src[(static_cast<std::size_t>(z / 2) * H + y / 2) * W + xx / 2] * T(0.125);
    }
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  require_grid(a, "concat_channels");
  require_grid(b, "concat_channels");
  const Grid ga = grid_of(a);
  const Grid gb = grid_of(b);
  require(ga.n == gb.n && ga.d == gb.d && ga.h == gb.h && ga.w == gb.w,
          "concat_channels: incompatible " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  const std::size_t S = ga.spatial();
  const std::size_t sa = ga.c * S, sb = gb.c * S;
  std::vector<T> out(static_cast<std::size_t>(ga.n) * (sa + sb));
  for (int n = 0; n < ga.n; ++n) {
    std::copy_n(a.value().data() + n * sa, sa, out.data() + n * (sa + sb));
    std::copy_n(b.value().data() + n * sb, sb, out.data() + n * (sa + sb) + sa);
  }
  return make_result<T>({ga.n, ga.c + gb.c, ga.d, ga.h, ga.w}, std::move(out), {a, b},
                        [n_ = ga.n, sa, sb](Node<T>& nd) {
    T* g0 = grad_of(nd, 0);
    T* g1 = grad_of(nd, 1);
    for (int n = 0; n < n_; ++n) {
      const T* src = nd.grad.data() + n * (sa + sb);
      if (g0)
        for (std::size_t i = 0; i < sa; ++i) g0[n * sa + i] += src[i];
      if (g1)
        for (std::size_t i = 0; i < sb; ++i) g1[n * sb + i] += src[sa + i];
    }
  });
}

// -- trilinear sampling -------------------------------------------------------------

namespace {

// Clamped coordinate along one axis: cell index, fraction, and whether the
// clamp was active (derivative zero).
struct AxisSample {
  int i0, i1;
  double t;
  bool clamped;
};

inline AxisSample axis_sample(double q, int n) {
  AxisSample s{};
  s.clamped = q < 0.0 || q > n - 1;
  q = std::clamp(q, 0.0, static_cast<double>(n - 1));
  s.i0 = static_cast<int>(std::floor(q));
  s.i1 = std::min(s.i0 + 1, n - 1);
  s.t = q - s.i0;
  if (kinks::sink) kinks::record(static_cast<std::uint64_t>(s.i0) * 2 + s.clamped);
  return s;
}

}  // namespace

template <class T>
Var<T> grid_sample(const Var<T>& x, const Var<T>& flow) {
  require_grid(x, "grid_sample");
  require_grid(flow, "grid_sample");
  const Grid g = grid_of(x);
  const Grid f = grid_of(flow);
  require(f.c == 3 && f.n == g.n && f.d == g.d && f.h == g.h && f.w == g.w,
          "grid_sample: field " + shape_string(flow.shape()) + " does not match image " + shape_string(x.shape()));
  const std::size_t S = g.spatial();
  std::vector<T> out(x.size());
  for (int n = 0; n < g.n; ++n) {
    const T* fz = flow.value().data() + (static_cast<std::size_t>(n) * 3 + 0) * S;
    const T* fy = fz + S;
    const T* fx = fy + S;
    for (int z = 0; z < g.d; ++z)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) {
          const std::size_t p = (static_cast<std::size_t>(z) * g.h + y) * g.w + xx;
          const AxisSample az = axis_sample(z + static_cast<double>(fz[p]), g.d);
          const AxisSample ay = axis_sample(y + static_cast<double>(fy[p]), g.h);
          const AxisSample ax = axis_sample(xx + static_cast<double>(fx[p]), g.w);
          const std::size_t i000 = (static_cast<std::size_t>(az.i0) * g.h + ay.i0) * g.w;
          const std::size_t i010 = (static_cast<std::size_t>(az.i0) * g.h + ay.i1) * g.w;
          const std::size_t i100 = (static_cast<std::size_t>(az.i1) * g.h + ay.i0) * g.w;
          const std::size_t i110 = (static_cast<std::size_t>(az.i1) * g.h + ay.i1) * g.w;
          const T tz = static_cast<T>(az.t), ty = static_cast<T>(ay.t), tx = static_cast<T>(ax.t);
          for (int c = 0; c < g.c; ++c) {
            const T* src = x.value().data() + (static_cast<std::size_t>(n) * g.c + c) * S;
            const T c00 = src[i000 + ax.i0] * (T(1) - tx) + src[i000 + ax.i1] * tx;
            const T c01 = src[i010 + ax.i0] * (T(1) - tx) + src[i010 + ax.i1] * tx;
            const T c10 = src[i100 + ax.i0] * (T(1) - tx) + src[i100 + ax.i1] * tx;
            const T c11 = src[i110 + ax.i0] * (T(1) - tx) + src[i110 + ax.i1] * tx;
            const T c0 = c00 * (T(1) - ty) + c01 * ty;
            const T c1 = c10 * (T(1) - ty) + c11 * ty;
            out[(static_cast<std::size_t>(n) * g.c + c) * S + p] = c0 * (T(1) - tz) + c1 * tz;
          }
        }
  }
  return make_result<T>(x.shape(), std::move(out), {x, flow}, [g, S](Node<T>& nd) {
    T* gx = grad_of(nd, 0);
    T* gf = grad_of(nd, 1);
    const auto& xv = nd.inputs[0]->value;
    const auto& fv = nd.inputs[1]->value;
    for (int n = 0; n < g.n; ++n) {
      const T* fz = fv.data() + (static_cast<std::size_t>(n) * 3 + 0) * S;
      const T* fy = fz + S;
      const T* fx = fy + S;
      for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
          for (int xx = 0; xx < g.w; ++xx) {
            const std::size_t p = (static_cast<std::size_t>(z) * g.h + y) * g.w + xx;
            const AxisSample az = axis_sample(z + static_cast<double>(fz[p]), g.d);
            const AxisSample ay = axis_sample(y + static_cast<double>(fy[p]), g.h);
            const AxisSample ax = axis_sample(xx + static_cast<double>(fx[p]), g.w);
            const std::size_t i000 = (static_cast<std::size_t>(az.i0) * g.h + ay.i0) * g.w;
            const std::size_t i010 = (static_cast<std::size_t>(az.i0) * g.h + ay.i1) * g.w;
            const std::size_t i100 = (static_cast<std::size_t>(az.i1) * g.h + ay.i0) * g.w;
            const std::size_t i110 = (static_cast<std::size_t>(az.i1) * g.h + ay.i1) * g.w;
            const T tz = static_cast<T>(az.t), ty = static_cast<T>(ay.t), tx = static_cast<T>(ax.t);
            const T wz[2] = {T(1) - tz, tz}, wy[2] = {T(1) - ty, ty}, wx[2] = {T(1) - tx, tx};
            const std::size_t rows[2][2] = {{i000, i010}, {i100, i110}};
            const int cx[2] = {ax.i0, ax.i1};
            T dz = 0, dy = 0, dx = 0;
            for (int c = 0; c < g.c; ++c) {
              const std::size_t off = (static_cast<std::size_t>(n) * g.c + c) * S;
              const T go = nd.grad[off + p];
              if (go == T(0)) continue;
              const T* src = xv.data() + off;
              for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                  for (int e = 0; e < 2; ++e) {
                    const std::size_t idx = rows[a][b] + cx[e];
                    if (gx) gx[off + idx] += go * wz[a] * wy[b] * wx[e];
                    const T v = src[idx] * go;
                    dz += v * (a ? T(1) : T(-1)) * wy[b] * wx[e];
                    dy += v * wz[a] * (b ? T(1) : T(-1)) * wx[e];
                    dx += v * wz[a] * wy[b] * (e ? T(1) : T(-1));
                  }
            }
            if (gf) {
              if (!az.clamped) gf[(static_cast<std::size_t>(n) * 3 + 0) * S + p] += dz;
              if (!ay.clamped) gf[(static_cast<std::size_t>(n) * 3 + 1) * S + p] += dy;
              if (!ax.clamped) gf[(static_cast<std::size_t>(n) * 3 + 2) * S + p] += dx;
            }
          }
    }
  });
}

template <class T>
Var<T> gradient_energy(const Var<T>& flow) {
  require_grid(flow, "gradient_energy");
  const Grid g = grid_of(flow);
  require(g.c == 3, "gradient_energy: field must have 3 components");
  const std::size_t S = g.spatial();
  const double denom = static_cast<double>(g.n) * 3.0 * static_cast<double>(S) * 3.0;
  const std::size_t steps[3] = {static_cast<std::size_t>(g.h) * g.w, static_cast<std::size_t>(g.w), 1};
  auto has_next = [g](int axis, int z, int y, int x) {
    return axis == 0 ? z + 1 < g.d : (axis == 1 ? y + 1 < g.h : x + 1 < g.w);
  };
  double s = 0;
  const auto& fv = flow.value();
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(g.n) * 3; ++plane) {
    const T* f = fv.data() + plane * S;
    for (int z = 0; z < g.d; ++z)
      for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
          const std::size_t p = (static_cast<std::size_t>(z) * g.h + y) * g.w + x;
          for (int axis = 0; axis < 3; ++axis) {
            if (!has_next(axis, z, y, x)) continue;
            const double d = static_cast<double>(f[p + steps[axis]]) - f[p];
            s += d * d;
          }
        }
  }
  return make_result<T>({}, {static_cast<T>(s / denom)}, {flow}, [g, S, denom, steps, has_next](Node<T>& nd) {
    T* gf = grad_of(nd, 0);
    if (!gf) return;
    const auto& fv = nd.inputs[0]->value;
    const T c = static_cast<T>(2.0 / denom) * nd.grad[0];
    for (std::size_t plane = 0; plane < static_cast<std::size_t>(g.n) * 3; ++plane) {
      const T* f = fv.data() + plane * S;
      T* gp = gf + plane * S;
      for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
          for (int x = 0; x < g.w; ++x) {
            const std::size_t p = (static_cast<std::size_t>(z) * g.h + y) * g.w + x;
            for (int axis = 0; axis < 3; ++axis) {
              if (!has_next(axis, z, y, x)) continue;
              const T d = f[p + steps[axis]] - f[p];
              gp[p + steps[axis]] += c * d;
              gp[p] -= c * d;
            }
          }
    }
  });
}

// -- dense --------------------------------------------------------------------------

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(x.shape().size() == 2, "linear: input must be {N,F}, got " + shape_string(x.shape()));
  require(weight.shape().size() == 2 && weight.dim(1) == x.dim(1),
          "linear: weight " + shape_string(weight.shape()) + " incompatible with input " + shape_string(x.shape()));
  const int N = x.dim(0), F = x.dim(1), O = weight.dim(0);
  require(bias.size() == static_cast<std::size_t>(O), "linear: bias size mismatch");
  std::vector<T> out(static_cast<std::size_t>(N) * O);
  Eigen::Map<const RowMat<T>> X(x.value().data(), N, F);
  Eigen::Map<const RowMat<T>> W(weight.value().data(), O, F);
  Eigen::Map<RowMat<T>> Y(out.data(), N, O);
  Y.noalias() = X * W.transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) Y(n, o) += bias.value()[o];
  return make_result<T>({N, O}, std::move(out), {x, weight, bias}, [N, F, O](Node<T>& nd) {
    Eigen::Map<const RowMat<T>> dY(nd.grad.data(), N, O);
    if (T* gx = grad_of(nd, 0)) {
      Eigen::Map<const RowMat<T>> W(nd.inputs[1]->value.data(), O, F);
      Eigen::Map<RowMat<T>> dX(gx, N, F);
      dX.noalias() += dY * W;
    }
    if (T* gw = grad_of(nd, 1)) {
      Eigen::Map<const RowMat<T>> X(nd.inputs[0]->value.data(), N, F);
      Eigen::Map<RowMat<T>> dW(gw, O, F);
      dW.noalias() += dY.transpose() * X;
    }
    if (T* gb = grad_of(nd, 2)) {
      for (int o = 0; o < O; ++o) {
        T acc = 0;
        for (int n = 0; n < N; ++n) acc += dY(n, o);
        gb[o] += acc;
      }
    }
  });
}

#define REGSYN_INSTANTIATE_OPS(T)                                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale(const Var<T>&, T);                                                 \
  template Var<T> add_scalar(const Var<T>&, T);                                            \
  template Var<T> relu(const Var<T>&);                                                     \
  template Var<T> leaky_relu(const Var<T>&, T);                                            \
  template Var<T> tanh(const Var<T>&);                                                     \
  template Var<T> detach(const Var<T>&);                                                   \
  template Var<T> mean(const Var<T>&);                                                     \
  template Var<T> l1(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mean_sq_to(const Var<T>&, T);                                            \
  template Var<T> mean_softplus(const Var<T>&, T, T);                                      \
  template Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>&);                  \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, int);                \
  template Var<T> instance_norm(const Var<T>&, T);                                         \
  template Var<T> channel_affine(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> upsample_nearest2(const Var<T>&);                                        \
  template Var<T> avg_pool2(const Var<T>&);                                                \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                           \
  template Var<T> grid_sample(const Var<T>&, const Var<T>&);                               \
  template Var<T> gradient_energy(const Var<T>&);                                          \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);

REGSYN_INSTANTIATE_OPS(float)
REGSYN_INSTANTIATE_OPS(double)

}  // namespace regsyn::ad
