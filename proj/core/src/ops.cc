// Copyright 2026 The RefineBox Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refinebox/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "refinebox/errors.hpp"

namespace refinebox {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void Require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void RequireRank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
  if (s.size() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + arg + " must have rank " +
                                std::to_string(rank) + ", got " + ShapeString(s));
  }
}

template <typename T>
void Accumulate(Node<T>& input, std::span<const T> delta) {
  if (!input.requires_grad) return;
  auto g = input.Grad().data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Bilinear weights of one sample point, following the usual ROI Align
// border handling: points more than one pixel outside read zero, points
// within the border band clamp to the edge.
template <typename T>
struct BilinearTaps {
  bool valid = false;
  std::array<std::int64_t, 4> index{};
  std::array<T, 4> weight{};
  std::array<T, 4> d_dy{};
  std::array<T, 4> d_dx{};
};

template <typename T>
BilinearTaps<T> ComputeTaps(T y, T x, std::int64_t height, std::int64_t width) {
  BilinearTaps<T> t;
  if (y < T(-1) || y > T(height) || x < T(-1) || x > T(width)) return t;
  bool clamp_y = false, clamp_x = false;
  if (y <= T(0)) {
    y = T(0);
    clamp_y = true;
  }
  if (x <= T(0)) {
    x = T(0);
    clamp_x = true;
  }
  std::int64_t y_low = static_cast<std::int64_t>(y);
  std::int64_t x_low = static_cast<std::int64_t>(x);
  std::int64_t y_high, x_high;
  if (y_low >= height - 1) {
    y_high = y_low = height - 1;
    y = T(y_low);
    clamp_y = true;
  } else {
    y_high = y_low + 1;
  }
  if (x_low >= width - 1) {
    x_high = x_low = width - 1;
    x = T(x_low);
    clamp_x = true;
  } else {
    x_high = x_low + 1;
  }
  const T ly = y - T(y_low), lx = x - T(x_low);
  const T hy = T(1) - ly, hx = T(1) - lx;
  t.valid = true;
  t.index = {y_low * width + x_low, y_low * width + x_high,
             y_high * width + x_low, y_high * width + x_high};
  t.weight = {hy * hx, hy * lx, ly * hx, ly * lx};
  if (!clamp_y) t.d_dy = {-hx, -lx, hx, lx};
  if (!clamp_x) t.d_dx = {-hy, hy, -ly, ly};
  return t;
}

// Sampling geometry of one ROI in feature-map units (half-pixel aligned).
template <typename T>
struct RoiGeometry {
  T start_x, start_y, bin_w, bin_h;

  RoiGeometry(T x1, T y1, T x2, T y2, int size)
      : start_x(x1 - T(0.5)),
        start_y(y1 - T(0.5)),
        bin_w((x2 - x1) / T(size)),
        bin_h((y2 - y1) / T(size)) {}

  // Fraction of the ROI extent at which sample (bin, sub) sits.
  static T Fraction(int bin, int sub, int sr, int size) {
    return (T(bin) + (T(sub) + T(0.5)) / T(sr)) / T(size);
  }
};

}  // namespace

template <typename T>
Var<T> Conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  RequireRank(xs, 4, "Conv2d", "input");
  RequireRank(ws, 4, "Conv2d", "weight");
  const std::int64_t n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const std::int64_t cout = ws[0], k = ws[2];
  Require(ws[1] == cin, "Conv2d: weight expects " + std::to_string(ws[1]) +
                            " input channels, got " + std::to_string(cin));
  Require(ws[3] == k && (k == 1 || k == 3), "Conv2d: kernel must be 1x1 or 3x3");
  Require(bias.shape() == Shape{cout}, "Conv2d: bias shape mismatch");

  const std::int64_t pad = k / 2;
  const std::int64_t plane = h * w;
  const std::int64_t kk = cin * k * k;
  const std::int64_t cols = n * plane;

  Tensor<T> col({kk, cols});
  const T* xd = x.value().raw();
  T* cd = col.raw();
  for (std::int64_t c = 0; c < cin; ++c) {
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        T* row = cd + ((c * k + ky) * k + kx) * cols;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* src = xd + (b * cin + c) * plane;
          T* dst = row + b * plane;
          for (std::int64_t yy = 0; yy < h; ++yy) {
            const std::int64_t sy = yy + ky - pad;
            for (std::int64_t xx = 0; xx < w; ++xx) {
              const std::int64_t sx = xx + kx - pad;
              dst[yy * w + xx] = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                     ? src[sy * w + sx]
                                     : T(0);
            }
          }
        }
      }
    }
  }

  RowMatrix<T> out_mat = ConstMatrixMap<T>(weight.value().raw(), cout, kk) *
                         ConstMatrixMap<T>(col.raw(), kk, cols);
  Tensor<T> out({n, cout, h, w});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t co = 0; co < cout; ++co) {
      const T bv = bias.value()[static_cast<std::size_t>(co)];
      const T* src = out_mat.data() + co * cols + b * plane;
      T* dst = out.raw() + (b * cout + co) * plane;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[p] + bv;
    }
  }

  return MakeResult<T>(
      std::move(out), "conv2d", {x, weight, bias},
      [=, col = std::move(col)](Node<T>& self) {
        Node<T>& xn = *self.inputs[0];
        Node<T>& wn = *self.inputs[1];
        Node<T>& bn = *self.inputs[2];
        RowMatrix<T> dy(cout, cols);
        const T* g = self.grad.raw();
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t co = 0; co < cout; ++co) {
            std::copy_n(g + (b * cout + co) * plane, plane,
                        dy.data() + co * cols + b * plane);
          }
        }
        if (wn.requires_grad) {
          MatrixMap<T>(wn.Grad().raw(), cout, kk).noalias() +=
              dy * ConstMatrixMap<T>(col.raw(), kk, cols).transpose();
        }
        if (bn.requires_grad) {
          auto bg = bn.Grad().data();
          for (std::int64_t co = 0; co < cout; ++co) {
            bg[static_cast<std::size_t>(co)] += dy.row(co).sum();
          }
        }
        if (xn.requires_grad) {
          RowMatrix<T> dcol =
              ConstMatrixMap<T>(wn.value.raw(), cout, kk).transpose() * dy;
          T* dx = xn.Grad().raw();
          for (std::int64_t c = 0; c < cin; ++c) {
            for (std::int64_t ky = 0; ky < k; ++ky) {
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const T* row = dcol.data() + ((c * k + ky) * k + kx) * cols;
                for (std::int64_t b = 0; b < n; ++b) {
                  T* dst = dx + (b * cin + c) * plane;
                  const T* src = row + b * plane;
                  for (std::int64_t yy = 0; yy < h; ++yy) {
                    const std::int64_t sy = yy + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (std::int64_t xx = 0; xx < w; ++xx) {
                      const std::int64_t sx = xx + kx - pad;
                      if (sx < 0 || sx >= w) continue;
                      dst[sy * w + sx] += src[yy * w + xx];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  Require(a.shape() == b.shape(), "Add: shape mismatch " + ShapeString(a.shape()) +
                                      " vs " + ShapeString(b.shape()));
  Tensor<T> out = a.value();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bd[i];
  return MakeResult<T>(std::move(out), "add", {a, b}, [](Node<T>& self) {
    Accumulate<T>(*self.inputs[0], self.grad.data());
    Accumulate<T>(*self.inputs[1], self.grad.data());
  });
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return MakeResult<T>(std::move(out), "relu", {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto g = in.Grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.value[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> GroupNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                 int groups, double eps) {
  const Shape& xs = x.shape();
  RequireRank(xs, 4, "GroupNorm", "input");
  const std::int64_t n = xs[0], c = xs[1], plane = xs[2] * xs[3];
  Require(groups > 0 && c % groups == 0,
          "GroupNorm: channels " + std::to_string(c) + " not divisible by " +
              std::to_string(groups) + " groups");
  Require(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
          "GroupNorm: affine shape mismatch");
  const std::int64_t per_group = c / groups;
  const std::int64_t m = per_group * plane;

  Tensor<T> xhat(xs);
  Tensor<T> rstd({n, static_cast<std::int64_t>(groups)});
  Tensor<T> out(xs);
  const T* xd = x.value().raw();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const std::int64_t base = (b * c + g * per_group) * plane;
      double mean = 0.0;
      for (std::int64_t i = 0; i < m; ++i) mean += xd[base + i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double d = xd[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const T rs = static_cast<T>(1.0 / std::sqrt(var + eps));
      rstd[static_cast<std::size_t>(b * groups + g)] = rs;
      for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t ch = g * per_group + i / plane;
        const T xh = static_cast<T>(xd[base + i] - mean) * rs;
        xhat[static_cast<std::size_t>(base + i)] = xh;
        out[static_cast<std::size_t>(base + i)] =
            xh * gamma.value()[static_cast<std::size_t>(ch)] +
            beta.value()[static_cast<std::size_t>(ch)];
      }
    }
  }

  return MakeResult<T>(
      std::move(out), "group_norm", {x, gamma, beta},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        Node<T>& xn = *self.inputs[0];
        Node<T>& gn = *self.inputs[1];
        Node<T>& bn = *self.inputs[2];
        const T* dy = self.grad.raw();
        if (gn.requires_grad || bn.requires_grad) {
          auto& gg = gn.Grad();
          auto& bg = bn.Grad();
          for (std::int64_t b = 0; b < n; ++b) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const std::int64_t base = (b * c + ch) * plane;
              T sg = 0, sb = 0;
              for (std::int64_t p = 0; p < plane; ++p) {
                sg += dy[base + p] * xhat[static_cast<std::size_t>(base + p)];
                sb += dy[base + p];
              }
              gg[static_cast<std::size_t>(ch)] += sg;
              bg[static_cast<std::size_t>(ch)] += sb;
            }
          }
        }
        if (!xn.requires_grad) return;
        T* dx = xn.Grad().raw();
        const T* gam = gn.value.raw();
        std::vector<T> dxhat(static_cast<std::size_t>(m));
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t g = 0; g < groups; ++g) {
            const std::int64_t base = (b * c + g * per_group) * plane;
            T sum = 0, dot = 0;
            for (std::int64_t i = 0; i < m; ++i) {
              const std::int64_t ch = g * per_group + i / plane;
              const T d = dy[base + i] * gam[ch];
              dxhat[static_cast<std::size_t>(i)] = d;
              sum += d;
              dot += d * xhat[static_cast<std::size_t>(base + i)];
            }
            const T rs = rstd[static_cast<std::size_t>(b * groups + g)];
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::int64_t i = 0; i < m; ++i) {
              dx[base + i] += rs * (dxhat[static_cast<std::size_t>(i)] - inv_m * sum -
                                    xhat[static_cast<std::size_t>(base + i)] * inv_m * dot);
            }
          }
        }
      });
}

template <typename T>
Var<T> UpsampleNearest(const Var<T>& x, std::int64_t out_h, std::int64_t out_w) {
  const Shape& xs = x.shape();
  RequireRank(xs, 4, "UpsampleNearest", "input");
  const std::int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  Require(h > 0 && w > 0 && out_h > 0 && out_w > 0, "UpsampleNearest: empty map");
  std::vector<std::int64_t> src_index(static_cast<std::size_t>(out_h * out_w));
  for (std::int64_t yy = 0; yy < out_h; ++yy) {
    const std::int64_t sy = std::min(yy * h / out_h, h - 1);
    for (std::int64_t xx = 0; xx < out_w; ++xx) {
      const std::int64_t sx = std::min(xx * w / out_w, w - 1);
      src_index[static_cast<std::size_t>(yy * out_w + xx)] = sy * w + sx;
    }
  }
  Tensor<T> out({n, c, out_h, out_w});
  const std::int64_t in_plane = h * w, out_plane = out_h * out_w;
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* src = x.value().raw() + p * in_plane;
    T* dst = out.raw() + p * out_plane;
    for (std::int64_t i = 0; i < out_plane; ++i) dst[i] = src[src_index[static_cast<std::size_t>(i)]];
  }
  return MakeResult<T>(std::move(out), "upsample_nearest", {x},
                       [=, src_index = std::move(src_index)](Node<T>& self) {
                         Node<T>& in = *self.inputs[0];
                         if (!in.requires_grad) return;
                         T* dx = in.Grad().raw();
                         const T* g = self.grad.raw();
                         for (std::int64_t p = 0; p < n * c; ++p) {
                           for (std::int64_t i = 0; i < out_plane; ++i) {
                             dx[p * in_plane + src_index[static_cast<std::size_t>(i)]] +=
                                 g[p * out_plane + i];
                           }
                         }
                       });
}

template <typename T>
Var<T> GlobalAvgPool(const Var<T>& x) {
  const Shape& xs = x.shape();
  RequireRank(xs, 4, "GlobalAvgPool", "input");
  const std::int64_t nc = xs[0] * xs[1], plane = xs[2] * xs[3];
  Require(plane > 0, "GlobalAvgPool: empty map");
  Tensor<T> out({xs[0], xs[1]});
  for (std::int64_t p = 0; p < nc; ++p) {
    T s = 0;
    for (std::int64_t i = 0; i < plane; ++i) s += x.value()[static_cast<std::size_t>(p * plane + i)];
    out[static_cast<std::size_t>(p)] = s / static_cast<T>(plane);
  }
  return MakeResult<T>(std::move(out), "global_avg_pool", {x}, [=](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.Grad().raw();
    for (std::int64_t p = 0; p < nc; ++p) {
      const T g = self.grad[static_cast<std::size_t>(p)] / static_cast<T>(plane);
      for (std::int64_t i = 0; i < plane; ++i) dx[p * plane + i] += g;
    }
  });
}

template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  RequireRank(x.shape(), 2, "Linear", "input");
  RequireRank(weight.shape(), 2, "Linear", "weight");
  const std::int64_t n = x.shape()[0], in = x.shape()[1], outd = weight.shape()[0];
  Require(weight.shape()[1] == in, "Linear: weight expects " +
                                       std::to_string(weight.shape()[1]) +
                                       " inputs, got " + std::to_string(in));
  Require(bias.shape() == Shape{outd}, "Linear: bias shape mismatch");
  Tensor<T> out({n, outd});
  MatrixMap<T> om(out.raw(), n, outd);
  om.noalias() = ConstMatrixMap<T>(x.value().raw(), n, in) *
                 ConstMatrixMap<T>(weight.value().raw(), outd, in).transpose();
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t o = 0; o < outd; ++o) om(r, o) += bias.value()[static_cast<std::size_t>(o)];
  }
  return MakeResult<T>(std::move(out), "linear", {x, weight, bias}, [=](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    Node<T>& bn = *self.inputs[2];
    ConstMatrixMap<T> dy(self.grad.raw(), n, outd);
    if (xn.requires_grad) {
      MatrixMap<T>(xn.Grad().raw(), n, in).noalias() +=
          dy * ConstMatrixMap<T>(wn.value.raw(), outd, in);
    }
    if (wn.requires_grad) {
      MatrixMap<T>(wn.Grad().raw(), outd, in).noalias() +=
          dy.transpose() * ConstMatrixMap<T>(xn.value.raw(), n, in);
    }
    if (bn.requires_grad) {
      auto bg = bn.Grad().data();
      for (std::int64_t o = 0; o < outd; ++o) bg[static_cast<std::size_t>(o)] += dy.col(o).sum();
    }
  });
}

template <typename T>
Var<T> Scale(const Var<T>& x, double factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= static_cast<T>(factor);
  return MakeResult<T>(std::move(out), "scale", {x}, [factor](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto g = in.Grad().data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * static_cast<T>(factor);
  });
}

template <typename T>
Var<T> SumScalars(std::span<const Var<T>> terms) {
  T total = 0;
  for (const auto& t : terms) {
    Require(t.value().numel() == 1, "SumScalars: term is not a scalar");
    total += t.value()[0];
  }
  std::vector<Var<T>> inputs(terms.begin(), terms.end());
  return MakeResult<T>(Tensor<T>({1}, std::vector<T>{total}), "sum", std::move(inputs),
                       [](Node<T>& self) {
                         for (auto& in : self.inputs) {
                           if (in->requires_grad) in->Grad()[0] += self.grad[0];
                         }
                       });
}

template <typename T>
Var<T> RefineBoxes(const Var<T>& boxes, const Var<T>& deltas, double eps) {
  RequireRank(boxes.shape(), 2, "RefineBoxes", "boxes");
  Require(boxes.shape().size() == 2 && boxes.shape()[1] == 4,
          "RefineBoxes: boxes must be [N, 4]");
  Require(deltas.shape() == boxes.shape(), "RefineBoxes: deltas shape mismatch");
  Require(eps > 0.0 && eps < 0.5, "RefineBoxes: eps must lie in (0, 0.5)");
  Tensor<T> out(boxes.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(RefineCoordinate(boxes.value()[i], deltas.value()[i], eps));
  }
  return MakeResult<T>(std::move(out), "refine_boxes", {boxes, deltas}, [eps](Node<T>& self) {
    Node<T>& bn = *self.inputs[0];
    Node<T>& dn = *self.inputs[1];
    for (std::size_t i = 0; i < self.value.numel(); ++i) {
      const double o = self.value[i];
      const double slope = o * (1.0 - o);
      const double g = self.grad[i];
      if (dn.requires_grad) dn.Grad()[i] += static_cast<T>(g * slope);
      if (bn.requires_grad) {
        const double b = bn.value[i];
        if (b > eps && b < 1.0 - eps) {
          bn.Grad()[i] += static_cast<T>(g * slope / (b * (1.0 - b)));
        }
      }
    }
  });
}

namespace {

struct GiouParts {
  double giou = 0.0;
  // d giou / d (ax1, ay1, ax2, ay2) for the first box.
  std::array<double, 4> grad{};
};

GiouParts GiouWithGradient(std::array<double, 4> a, std::array<double, 4> b) {
  GiouParts r;
  const double ix1 = std::max(a[0], b[0]), iy1 = std::max(a[1], b[1]);
  const double ix2 = std::min(a[2], b[2]), iy2 = std::min(a[3], b[3]);
  const double iw = std::max(0.0, ix2 - ix1), ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double aw = a[2] - a[0], ah = a[3] - a[1];
  const double area_a = aw * ah;
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  const double cw = std::max(a[2], b[2]) - std::min(a[0], b[0]);
  const double ch = std::max(a[3], b[3]) - std::min(a[1], b[1]);
  const double hull = cw * ch;
  if (uni <= 0.0 || hull <= 0.0) return r;
  r.giou = inter / uni - (hull - uni) / hull;

  const double d_inter = (uni + inter) / (uni * uni) - 1.0 / hull;
  const double d_area = -inter / (uni * uni) + 1.0 / hull;
  const double d_hull = -uni / (hull * hull);

  std::array<double, 4> d_i{}, d_a{}, d_c{};
  if (iw > 0.0 && ih > 0.0) {
    if (a[0] >= b[0]) d_i[0] = -ih;
    if (a[2] <= b[2]) d_i[2] = ih;
    if (a[1] >= b[1]) d_i[1] = -iw;
    if (a[3] <= b[3]) d_i[3] = iw;
  }
  d_a = {-ah, -aw, ah, aw};
  if (a[0] <= b[0]) d_c[0] = -ch;
  if (a[2] >= b[2]) d_c[2] = ch;
  if (a[1] <= b[1]) d_c[1] = -cw;
  if (a[3] >= b[3]) d_c[3] = cw;
  for (int k = 0; k < 4; ++k) {
    r.grad[k] = d_inter * d_i[k] + d_area * d_a[k] + d_hull * d_c[k];
  }
  return r;
}

std::array<double, 4> Corners(double cx, double cy, double w, double h) {
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace

template <typename T>
Var<T> BoxRegressionLoss(const Var<T>& boxes, const Tensor<T>& targets,
                         double w_l1, double w_giou) {
  RequireRank(boxes.shape(), 2, "BoxRegressionLoss", "boxes");
  Require(boxes.shape()[1] == 4, "BoxRegressionLoss: boxes must be [N, 4]");
  Require(targets.shape() == boxes.shape(), "BoxRegressionLoss: targets shape mismatch");
  const std::size_t n = static_cast<std::size_t>(boxes.shape()[0]);
  const auto bv = boxes.value().data();
  const auto tv = targets.data();
  double total = 0.0;
  Tensor<T> grad(boxes.shape());
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 4> p{}, t{};
    for (int k = 0; k < 4; ++k) {
      p[k] = bv[i * 4 + k];
      t[k] = tv[i * 4 + k];
    }
    double l1 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double d = p[k] - t[k];
      l1 += std::abs(d);
      const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      grad[i * 4 + k] += static_cast<T>(w_l1 * sign);
    }
    const GiouParts gp =
        GiouWithGradient(Corners(p[0], p[1], p[2], p[3]), Corners(t[0], t[1], t[2], t[3]));
    total += w_l1 * l1 + w_giou * (1.0 - gp.giou);
    // Corner partials -> (cx, cy, w, h); loss uses -giou.
    const auto& g = gp.grad;
    grad[i * 4 + 0] += static_cast<T>(-w_giou * (g[0] + g[2]));
    grad[i * 4 + 1] += static_cast<T>(-w_giou * (g[1] + g[3]));
    grad[i * 4 + 2] += static_cast<T>(-w_giou * 0.5 * (g[2] - g[0]));
    grad[i * 4 + 3] += static_cast<T>(-w_giou * 0.5 * (g[3] - g[1]));
  }
  return MakeResult<T>(Tensor<T>({1}, std::vector<T>{static_cast<T>(total)}),
                       "box_regression_loss", {boxes},
                       [grad = std::move(grad)](Node<T>& self) {
                         Node<T>& bn = *self.inputs[0];
                         if (!bn.requires_grad) return;
                         auto g = bn.Grad().data();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i] * self.grad[0];
                       });
}

template <typename T>
Tensor<T> RoiAlign(const Tensor<T>& feature, const Box& box, const RoiAlignSpec& spec) {
  RequireRank(feature.shape(), 3, "RoiAlign", "feature");
  const std::int64_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  Require(h >= 1 && w >= 1, "RoiAlign: empty feature map");
  const int s = spec.output_size, sr = spec.sampling_ratio;
  Require(s >= 1 && sr >= 1, "RoiAlign: output size and sampling ratio must be positive");
  const RoiGeometry<T> geo(static_cast<T>(box.x1()), static_cast<T>(box.y1()),
                           static_cast<T>(box.x2()), static_cast<T>(box.y2()), s);
  Tensor<T> out({c, s, s});
  const T norm = T(1) / static_cast<T>(sr * sr);
  const std::int64_t plane = h * w;
  for (int ph = 0; ph < s; ++ph) {
    for (int pw = 0; pw < s; ++pw) {
      for (int iy = 0; iy < sr; ++iy) {
        const T y = geo.start_y + T(ph) * geo.bin_h + (T(iy) + T(0.5)) * geo.bin_h / T(sr);
        for (int ix = 0; ix < sr; ++ix) {
          const T x = geo.start_x + T(pw) * geo.bin_w + (T(ix) + T(0.5)) * geo.bin_w / T(sr);
          const auto taps = ComputeTaps<T>(y, x, h, w);
          if (!taps.valid) continue;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* f = feature.raw() + ch * plane;
            T v = 0;
            for (int q = 0; q < 4; ++q) v += taps.weight[q] * f[taps.index[q]];
            out[static_cast<std::size_t>((ch * s + ph) * s + pw)] += v * norm;
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Var<T> RoiAlignLevels(std::span<const Var<T>> levels, std::span<const int> strides,
                      const Var<T>& boxes, std::span<const int> level_of_box,
                      double image_w, double image_h, const RoiAlignSpec& spec) {
  Require(!levels.empty() && levels.size() == strides.size(),
          "RoiAlignLevels: levels and strides disagree");
  RequireRank(boxes.shape(), 2, "RoiAlignLevels", "boxes");
  Require(boxes.shape()[1] == 4, "RoiAlignLevels: boxes must be [N, 4]");
  const std::size_t n = static_cast<std::size_t>(boxes.shape()[0]);
  Require(level_of_box.size() == n, "RoiAlignLevels: one level per box required");
  const std::int64_t c = levels[0].shape().at(1);
  for (const auto& l : levels) {
    RequireRank(l.shape(), 4, "RoiAlignLevels", "level");
    Require(l.shape()[0] == 1 && l.shape()[1] == c,
            "RoiAlignLevels: levels must be [1, C, H, W] with equal C");
  }
  for (int l : level_of_box) {
    Require(l >= 0 && static_cast<std::size_t>(l) < levels.size(),
            "RoiAlignLevels: level index out of range");
  }
  const int s = spec.output_size, sr = spec.sampling_ratio;
  const T norm = T(1) / static_cast<T>(sr * sr);

  // Visits every sample of box i: fn(ph, pw, frac_y, frac_x, taps).
  auto for_each_sample = [=](std::span<const T> box, int stride, std::int64_t h,
                             std::int64_t w, auto&& fn) {
    const T scale = T(1) / static_cast<T>(stride);
    const T iw = static_cast<T>(image_w), ih = static_cast<T>(image_h);
    const T x1 = (box[0] - T(0.5) * box[2]) * iw * scale;
    const T x2 = (box[0] + T(0.5) * box[2]) * iw * scale;
    const T y1 = (box[1] - T(0.5) * box[3]) * ih * scale;
    const T y2 = (box[1] + T(0.5) * box[3]) * ih * scale;
    const RoiGeometry<T> geo(x1, y1, x2, y2, s);
    for (int ph = 0; ph < s; ++ph) {
      for (int pw = 0; pw < s; ++pw) {
        for (int iy = 0; iy < sr; ++iy) {
          const T y = geo.start_y + T(ph) * geo.bin_h + (T(iy) + T(0.5)) * geo.bin_h / T(sr);
          const T fy = RoiGeometry<T>::Fraction(ph, iy, sr, s);
          for (int ix = 0; ix < sr; ++ix) {
            const T x = geo.start_x + T(pw) * geo.bin_w + (T(ix) + T(0.5)) * geo.bin_w / T(sr);
            const T fx = RoiGeometry<T>::Fraction(pw, ix, sr, s);
            fn(ph, pw, fy, fx, ComputeTaps<T>(y, x, h, w));
          }
        }
      }
    }
  };

  Tensor<T> out({static_cast<std::int64_t>(n), c, s, s});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& lv = levels[static_cast<std::size_t>(level_of_box[i])].value();
    const std::int64_t h = lv.dim(2), w = lv.dim(3), plane = h * w;
    T* dst = out.raw() + static_cast<std::int64_t>(i) * c * s * s;
    for_each_sample(boxes.value().data().subspan(i * 4, 4),
                    strides[static_cast<std::size_t>(level_of_box[i])], h, w,
                    [&](int ph, int pw, T, T, const BilinearTaps<T>& taps) {
                      if (!taps.valid) return;
                      for (std::int64_t ch = 0; ch < c; ++ch) {
                        const T* f = lv.raw() + ch * plane;
                        T v = 0;
                        for (int q = 0; q < 4; ++q) v += taps.weight[q] * f[taps.index[q]];
                        dst[(ch * s + ph) * s + pw] += v * norm;
                      }
                    });
  }

  std::vector<Var<T>> inputs(levels.begin(), levels.end());
  inputs.push_back(boxes);
  std::vector<int> lob(level_of_box.begin(), level_of_box.end());
  std::vector<int> str(strides.begin(), strides.end());
  return MakeResult<T>(
      std::move(out), "roi_align", std::move(inputs),
      [=, lob = std::move(lob), str = std::move(str)](Node<T>& self) {
        const std::size_t num_levels = self.inputs.size() - 1;
        Node<T>& bn = *self.inputs[num_levels];
        const T iw = static_cast<T>(image_w), ih = static_cast<T>(image_h);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t l = static_cast<std::size_t>(lob[i]);
          Node<T>& ln = *self.inputs[l];
          const std::int64_t h = ln.value.dim(2), w = ln.value.dim(3), plane = h * w;
          const T* g = self.grad.raw() + static_cast<std::int64_t>(i) * c * s * s;
          T* df = ln.requires_grad ? ln.Grad().raw() : nullptr;
          const T* f = ln.value.raw();
          // d out / d (x1, y1, x2, y2) in feature units.
          T dx1 = 0, dy1 = 0, dx2 = 0, dy2 = 0;
          for_each_sample(bn.value.data().subspan(i * 4, 4), str[l], h, w,
                          [&](int ph, int pw, T fy, T fx, const BilinearTaps<T>& taps) {
                            if (!taps.valid) return;
                            T dy = 0, dx = 0;
                            for (std::int64_t ch = 0; ch < c; ++ch) {
                              const T go = g[(ch * s + ph) * s + pw] * norm;
                              if (go == T(0)) continue;
                              const T* fc = f + ch * plane;
                              for (int q = 0; q < 4; ++q) {
                                if (df) df[ch * plane + taps.index[q]] += go * taps.weight[q];
                                dy += go * taps.d_dy[q] * fc[taps.index[q]];
                                dx += go * taps.d_dx[q] * fc[taps.index[q]];
                              }
                            }
                            dy1 += dy * (T(1) - fy);
                            dy2 += dy * fy;
                            dx1 += dx * (T(1) - fx);
                            dx2 += dx * fx;
                          });
          if (!bn.requires_grad) continue;
          const T scale = T(1) / static_cast<T>(str[l]);
          auto bg = bn.Grad().data();
          bg[i * 4 + 0] += (dx1 + dx2) * iw * scale;
          bg[i * 4 + 1] += (dy1 + dy2) * ih * scale;
          bg[i * 4 + 2] += T(0.5) * (dx2 - dx1) * iw * scale;
          bg[i * 4 + 3] += T(0.5) * (dy2 - dy1) * ih * scale;
        }
      });
}

#define REFINEBOX_INSTANTIATE_OPS(T)                                                   \
  template Var<T> Conv2d(const Var<T>&, const Var<T>&, const Var<T>&);                 \
  template Var<T> Add(const Var<T>&, const Var<T>&);                                   \
  template Var<T> Relu(const Var<T>&);                                                 \
  template Var<T> GroupNorm(const Var<T>&, const Var<T>&, const Var<T>&, int, double); \
  template Var<T> UpsampleNearest(const Var<T>&, std::int64_t, std::int64_t);          \
  template Var<T> GlobalAvgPool(const Var<T>&);                                        \
  template Var<T> Linear(const Var<T>&, const Var<T>&, const Var<T>&);                 \
  template Var<T> Scale(const Var<T>&, double);                                        \
  template Var<T> SumScalars(std::span<const Var<T>>);                                 \
  template Var<T> RefineBoxes(const Var<T>&, const Var<T>&, double);                   \
  template Var<T> BoxRegressionLoss(const Var<T>&, const Tensor<T>&, double, double);  \
  template Tensor<T> RoiAlign(const Tensor<T>&, const Box&, const RoiAlignSpec&);      \
  template Var<T> RoiAlignLevels(std::span<const Var<T>>, std::span<const int>,        \
                                 const Var<T>&, std::span<const int>, double, double,  \
                                 const RoiAlignSpec&);

REFINEBOX_INSTANTIATE_OPS(float)
REFINEBOX_INSTANTIATE_OPS(double)

#undef REFINEBOX_INSTANTIATE_OPS

}  // namespace refinebox
