// Copyright 2026 The GDB Authors. All Rights Reserved.
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

// 2-D convolution and transposed convolution, lowered to im2col + GEMM.
//
// conv2d weights are [out_ch, in_ch, kh, kw]. conv_transpose2d weights are
// [in_ch, out_ch, kh, kw], so the same weight tensor drives a convolution and
// its adjoint. Column buffers are rebuilt in backward instead of cached.

#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "gdb/tensor.hpp"

namespace gdb {

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

struct ConvParams {
  Tensor weight;
  Tensor bias;  // may be undefined
  ConvGeometry geom;

  int out_ch() const { return weight.shape().n; }
  int in_ch() const { return weight.shape().c; }
  int kh() const { return weight.shape().h; }
  int kw() const { return weight.shape().w; }
};

inline int conv_out_size(int in, int k, const ConvGeometry& g) {
  return (in + 2 * g.padding - g.dilation * (k - 1) - 1) / g.stride + 1;
}

inline int conv_transpose_out_size(int in, int k, const ConvGeometry& g) {
  return (in - 1) * g.stride - 2 * g.padding + g.dilation * (k - 1) + 1;
}

namespace detail {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Row sums in a fixed order. Eigen's vectorized reductions peel elements
// according to buffer alignment, which makes the rounding depend on where
// the allocator placed the gradient.
inline void add_row_sums(const Real* g, int rows, std::size_t cols, Real* out) {
  for (int r = 0; r < rows; ++r) {
    double acc = 0;
    for (std::size_t i = 0; i < cols; ++i) acc += g[r * cols + i];
    out[r] += static_cast<Real>(acc);
  }
}

struct ColumnLayout {
  int channels, in_h, in_w, kh, kw, out_h, out_w;
  ConvGeometry g;
  int rows() const { return channels * kh * kw; }
  int cols() const { return out_h * out_w; }
};

// cols[(c*kh+ky)*kw+kx, oy*out_w+ox] = img[c, oy*s-p+ky*d, ox*s-p+kx*d] (0 outside)
inline void im2col(const Real* img, const ColumnLayout& L, Real* cols) {
  const int s = L.g.stride, p = L.g.padding, d = L.g.dilation;
  for (int c = 0; c < L.channels; ++c)
    for (int ky = 0; ky < L.kh; ++ky)
      for (int kx = 0; kx < L.kw; ++kx) {
        Real* row = cols + static_cast<std::size_t>((c * L.kh + ky) * L.kw + kx) * L.cols();
        const Real* plane = img + static_cast<std::size_t>(c) * L.in_h * L.in_w;
        for (int oy = 0; oy < L.out_h; ++oy) {
          Real* dst = row + oy * L.out_w;
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= L.in_h) {
            std::fill_n(dst, L.out_w, Real(0));
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(iy) * L.in_w;
          const int x0 = kx * d - p;
          if (s == 1) {
            // contiguous run; clip the ends
            const int lo = std::clamp(-x0, 0, L.out_w), hi = std::clamp(L.in_w - x0, lo, L.out_w);
            std::fill_n(dst, lo, Real(0));
            std::copy(src + x0 + lo, src + x0 + hi, dst + lo);
            std::fill(dst + hi, dst + L.out_w, Real(0));
          } else {
            for (int ox = 0; ox < L.out_w; ++ox) {
              const int ix = ox * s + x0;
              dst[ox] = (ix >= 0 && ix < L.in_w) ? src[ix] : Real(0);
            }
          }
        }
      }
}

// Adjoint of im2col: scatter-add the columns back into the image.
inline void col2im(const Real* cols, const ColumnLayout& L, Real* img) {
  const int s = L.g.stride, p = L.g.padding, d = L.g.dilation;
  for (int c = 0; c < L.channels; ++c)
    for (int ky = 0; ky < L.kh; ++ky)
      for (int kx = 0; kx < L.kw; ++kx) {
        const Real* row = cols + static_cast<std::size_t>((c * L.kh + ky) * L.kw + kx) * L.cols();
        Real* plane = img + static_cast<std::size_t>(c) * L.in_h * L.in_w;
        for (int oy = 0; oy < L.out_h; ++oy) {
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= L.in_h) continue;
          const Real* src = row + oy * L.out_w;
          Real* dst = plane + static_cast<std::size_t>(iy) * L.in_w;
          const int x0 = kx * d - p;
          for (int ox = 0; ox < L.out_w; ++ox) {
            const int ix = ox * s + x0;
            if (ix >= 0 && ix < L.in_w) dst[ix] += src[ox];
          }
        }
      }
}

inline void check_geometry(const ConvGeometry& g) {
  if (g.stride < 1 || g.dilation < 1 || g.padding < 0) throw ArgumentError("invalid convolution geometry");
}

inline void check_bias(const Tensor& bias, int channels) {
  if (bias.defined() && static_cast<int>(bias.numel()) != channels)
    throw ShapeError("bias length " + std::to_string(bias.numel()) + " does not match " + std::to_string(channels) +
                     " output channels");
}

}  // namespace detail

// Cross-correlation with stride, dilation and zero padding.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  detail::check_geometry(g);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.c != ws.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " + std::to_string(ws.c));
  detail::check_bias(bias, ws.n);
  const int oh = conv_out_size(xs.h, ws.h, g), ow = conv_out_size(xs.w, ws.w, g);
  if (oh < 1 || ow < 1) throw ShapeError("conv2d: output would be empty for input " + xs.str());
  const detail::ColumnLayout L{xs.c, xs.h, xs.w, ws.h, ws.w, oh, ow, g};
  const Shape os{xs.n, ws.n, oh, ow};
  std::vector<Real> out(os.size());
  std::vector<Real> cols(static_cast<std::size_t>(L.rows()) * L.cols());
  detail::ConstMatrixMap W(weight.data().data(), ws.n, L.rows());
  for (int n = 0; n < xs.n; ++n) {
    detail::im2col(input.data().data() + n * static_cast<std::size_t>(xs.c) * xs.plane(), L, cols.data());
    detail::MatrixMap Y(out.data() + n * os.c * os.plane(), os.c, L.cols());
    Y.noalias() = W * detail::ConstMatrixMap(cols.data(), L.rows(), L.cols());
    if (bias.defined()) Y.colwise() += Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(bias.data().data(), os.c);
  }
  check_finite(out, "conv2d");
  detail::Node *px = input.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(os, std::move(out), parents, [px, pw, pb, L, os](detail::Node& self) {
    std::vector<Real> cols(static_cast<std::size_t>(L.rows()) * L.cols());
    detail::ConstMatrixMap W(pw->value.data(), os.c, L.rows());
    const std::size_t in_stride = static_cast<std::size_t>(L.channels) * L.in_h * L.in_w;
    for (int n = 0; n < os.n; ++n) {
      detail::ConstMatrixMap G(self.grad.data() + n * os.c * os.plane(), os.c, L.cols());
      if (pb && pb->requires_grad)
        detail::add_row_sums(G.data(), os.c, os.plane(), pb->grad.data());
      if (pw->requires_grad) {
        detail::im2col(px->value.data() + n * in_stride, L, cols.data());
        detail::MatrixMap(pw->grad.data(), os.c, L.rows()).noalias() +=
            G * detail::ConstMatrixMap(cols.data(), L.rows(), L.cols()).transpose();
      }
      if (px->requires_grad) {
        detail::MatrixMap C(cols.data(), L.rows(), L.cols());
        C.noalias() = W.transpose() * G;
        detail::col2im(cols.data(), L, px->grad.data() + n * in_stride);
      }
    }
  });
}

inline Tensor conv2d(const Tensor& input, const ConvParams& p) { return conv2d(input, p.weight, p.bias, p.geom); }

// Gradient-of-convolution semantics; stride acts as the upsampling factor.
inline Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  detail::check_geometry(g);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();  // [in, out, kh, kw]
  if (xs.c != ws.n)
    throw ShapeError("conv_transpose2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.n));
  detail::check_bias(bias, ws.c);
  const int oh = conv_transpose_out_size(xs.h, ws.h, g), ow = conv_transpose_out_size(xs.w, ws.w, g);
  if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: output would be empty for input " + xs.str());
  // Layout of the convolution whose adjoint this is: image = output, columns = input grid.
  const detail::ColumnLayout L{ws.c, oh, ow, ws.h, ws.w, xs.h, xs.w, g};
  const Shape os{xs.n, ws.c, oh, ow};
  std::vector<Real> out(os.size(), Real(0));
  std::vector<Real> cols(static_cast<std::size_t>(L.rows()) * L.cols());
  detail::ConstMatrixMap W(weight.data().data(), ws.n, L.rows());
  for (int n = 0; n < xs.n; ++n) {
    detail::MatrixMap C(cols.data(), L.rows(), L.cols());
    C.noalias() = W.transpose() * detail::ConstMatrixMap(input.data().data() + n * xs.c * xs.plane(), xs.c, L.cols());
    Real* y = out.data() + n * os.c * os.plane();
    detail::col2im(cols.data(), L, y);
    if (bias.defined())
      detail::MatrixMap(y, os.c, os.plane()).colwise() +=
          Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(bias.data().data(), os.c);
  }
  check_finite(out, "conv_transpose2d");
  detail::Node *px = input.node(), *pw = weight.node(), *pb = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(os, std::move(out), parents, [px, pw, pb, L, os, xs](detail::Node& self) {
    std::vector<Real> cols(static_cast<std::size_t>(L.rows()) * L.cols());
    detail::ConstMatrixMap W(pw->value.data(), xs.c, L.rows());
    for (int n = 0; n < os.n; ++n) {
      const Real* g = self.grad.data() + n * os.c * os.plane();
      if (pb && pb->requires_grad)
        detail::add_row_sums(g, os.c, os.plane(), pb->grad.data());
      if (!pw->requires_grad && !px->requires_grad) continue;
      detail::im2col(g, L, cols.data());
      detail::ConstMatrixMap C(cols.data(), L.rows(), L.cols());
      if (px->requires_grad)
        detail::MatrixMap(px->grad.data() + n * xs.c * xs.plane(), xs.c, L.cols()).noalias() += W * C;
      if (pw->requires_grad)
        detail::MatrixMap(pw->grad.data(), xs.c, L.rows()).noalias() +=
            detail::ConstMatrixMap(px->value.data() + n * xs.c * xs.plane(), xs.c, L.cols()) * C.transpose();
    }
  });
}

inline Tensor conv_transpose2d(const Tensor& input, const ConvParams& p) {
  return conv_transpose2d(input, p.weight, p.bias, p.geom);
}

}  // namespace gdb
