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

// Classical thresholding and edge detection. Otsu and Sobel build the prior
// mask and edge map fed to the network; Otsu, Sauvola and Niblack double as
// comparison baselines. Dark pixels are text throughout.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gdb/error.hpp"
#include "gdb/image.hpp"

namespace gdb {

struct Histogram256 {
  std::array<std::uint64_t, 256> bins{};
  std::uint64_t total = 0;

  static Histogram256 of(const RasterImage& gray) {
    Histogram256 h;
    for (float v : gray.plane(0)) ++h.bins[quantize(v)];
    h.total = gray.area();
    return h;
  }
};

struct LocalStatsWindow {
  int window = 25;
  double k = 0.2;
  double R = 128.0;

  static LocalStatsWindow sauvola_defaults() { return {25, 0.2, 128.0}; }
  static LocalStatsWindow niblack_defaults() { return {25, -0.2, 128.0}; }

  void validate() const {
    if (window < 3 || window % 2 == 0) throw ArgumentError("window must be odd and >= 3");
    if (R <= 0) throw ArgumentError("dynamic range R must be positive");
  }
};

// Threshold bin maximizing w0*w1*(mu0-mu1)^2, where class 0 holds bins <= t.
// Ties resolve to the smallest t. A single-bin image returns that bin.
inline int otsu_threshold(const Histogram256& hist) {
  if (hist.total == 0) throw ArgumentError("Otsu threshold of an empty image");
  int occupied = 0, only = 0;
  for (int b = 0; b < 256; ++b)
    if (hist.bins[b]) ++occupied, only = b;
  if (occupied == 1) return only;

  const double total = static_cast<double>(hist.total);
  double sum_all = 0;
  for (int b = 0; b < 256; ++b) sum_all += static_cast<double>(b) * hist.bins[b];

  double w0 = 0, sum0 = 0, best = -1;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist.bins[t];
    sum0 += static_cast<double>(t) * hist.bins[t];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

inline int otsu_threshold(const RasterImage& gray) {
  if (gray.channels() != 1) throw ArgumentError("Otsu expects a single-channel image");
  if (gray.empty()) throw ArgumentError("Otsu threshold of an empty image");
  return otsu_threshold(Histogram256::of(gray));
}

// Pixels at or below the threshold bin are text; blank images are all background.
inline BinaryMap binarize_with_threshold(const RasterImage& gray, int t) {
  BinaryMap out(gray.width(), gray.height());
  auto plane = gray.plane(0);
  for (std::size_t i = 0; i < plane.size(); ++i) out.data()[i] = quantize(plane[i]) <= t ? 1 : 0;
  return out;
}

inline BinaryMap binarize_otsu(const RasterImage& gray) {
  if (gray.channels() != 1) throw ArgumentError("Otsu expects a single-channel image");
  if (gray.empty()) return BinaryMap(gray.width(), gray.height());
  const Histogram256 hist = Histogram256::of(gray);
  const int occupied = static_cast<int>(std::count_if(hist.bins.begin(), hist.bins.end(), [](auto n) { return n > 0; }));
  if (occupied == 1) return BinaryMap(gray.width(), gray.height());
  return binarize_with_threshold(gray, otsu_threshold(hist));
}

namespace detail {

// Summed-area tables over the reflect-padded 8-bit-scale image, one row and
// column larger than the padded image so window sums need no bounds checks.
struct IntegralImages {
  int width = 0;   // padded width + 1
  int radius = 0;
  std::vector<double> sum;
  std::vector<double> sq;

  double window_sum(const std::vector<double>& table, int x0, int y0, int x1, int y1) const {
    return table[y1 * width + x1] - table[y0 * width + x1] - table[y1 * width + x0] + table[y0 * width + x0];
  }
};

inline IntegralImages build_integrals(const RasterImage& gray, int window) {
  IntegralImages ii;
  ii.radius = window / 2;
  const int pw = gray.width() + 2 * ii.radius;
  const int ph = gray.height() + 2 * ii.radius;
  ii.width = pw + 1;
  ii.sum.assign(static_cast<std::size_t>(ii.width) * (ph + 1), 0.0);
  ii.sq.assign(ii.sum.size(), 0.0);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y - ii.radius, gray.height());
    double row = 0, row_sq = 0;
    for (int x = 0; x < pw; ++x) {
      const double v = 255.0 * gray.at(sy, reflect_index(x - ii.radius, gray.width()));
      row += v;
      row_sq += v * v;
      const std::size_t at = static_cast<std::size_t>(y + 1) * ii.width + x + 1;
      ii.sum[at] = ii.sum[at - ii.width] + row;
      ii.sq[at] = ii.sq[at - ii.width] + row_sq;
    }
  }
  return ii;
}

// Per-pixel local mean and population standard deviation on the 8-bit scale.
template <class ThresholdFn>
std::vector<double> local_thresholds(const RasterImage& gray, const LocalStatsWindow& params, ThresholdFn fn) {
  if (gray.channels() != 1) throw ArgumentError("local thresholding expects a single-channel image");
  params.validate();
  std::vector<double> out(gray.area());
  if (gray.empty()) return out;
  const IntegralImages ii = build_integrals(gray, params.window);
  const double n = static_cast<double>(params.window) * params.window;
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x) {
      const int x1 = x + params.window, y1 = y + params.window;
      const double m = ii.window_sum(ii.sum, x, y, x1, y1) / n;
      const double var = std::max(0.0, ii.window_sum(ii.sq, x, y, x1, y1) / n - m * m);
      out[static_cast<std::size_t>(y) * gray.width() + x] = fn(m, std::sqrt(var));
    }
  return out;
}

inline BinaryMap apply_thresholds(const RasterImage& gray, const std::vector<double>& thresholds) {
  BinaryMap out(gray.width(), gray.height());
  auto plane = gray.plane(0);
  for (std::size_t i = 0; i < plane.size(); ++i) out.data()[i] = 255.0 * plane[i] < thresholds[i] ? 1 : 0;
  return out;
}

}  // namespace detail

// T = m * (1 + k * (s / R - 1)) on the 8-bit scale.
inline std::vector<double> sauvola_thresholds(const RasterImage& gray, const LocalStatsWindow& params) {
  return detail::local_thresholds(gray, params,
                                  [&](double m, double s) { return m * (1.0 + params.k * (s / params.R - 1.0)); });
}

// T = m + k * s on the 8-bit scale.
inline std::vector<double> niblack_thresholds(const RasterImage& gray, const LocalStatsWindow& params) {
  return detail::local_thresholds(gray, params, [&](double m, double s) { return m + params.k * s; });
}

// A pixel is text when strictly darker than its local threshold.
inline BinaryMap binarize_sauvola(const RasterImage& gray,
                                  const LocalStatsWindow& params = LocalStatsWindow::sauvola_defaults()) {
  return detail::apply_thresholds(gray, sauvola_thresholds(gray, params));
}

inline BinaryMap binarize_niblack(const RasterImage& gray,
                                  const LocalStatsWindow& params = LocalStatsWindow::niblack_defaults()) {
  return detail::apply_thresholds(gray, niblack_thresholds(gray, params));
}

struct SobelGradients {
  std::vector<float> gx;
  std::vector<float> gy;
};

// Raw 3x3 Sobel responses on the reflect-padded image, before normalization.
inline SobelGradients sobel_gradients(const RasterImage& gray) {
  if (gray.channels() != 1) throw ArgumentError("Sobel expects a single-channel image");
  const int w = gray.width(), h = gray.height();
  SobelGradients g{std::vector<float>(gray.area()), std::vector<float>(gray.area())};
  if (gray.empty()) return g;
  for (int y = 0; y < h; ++y) {
    const int ym = reflect_index(y - 1, h), yp = reflect_index(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect_index(x - 1, w), xp = reflect_index(x + 1, w);
      const float a = gray.at(ym, xm), b = gray.at(ym, x), c = gray.at(ym, xp);
      const float d = gray.at(y, xm), f = gray.at(y, xp);
      const float p = gray.at(yp, xm), q = gray.at(yp, x), r = gray.at(yp, xp);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.gx[i] = (c + 2 * f + r) - (a + 2 * d + p);
      g.gy[i] = (p + 2 * q + r) - (a + 2 * b + c);
    }
  }
  return g;
}

// Gradient magnitude divided by its per-image maximum; all zeros when flat.
inline RasterImage sobel_edge(const RasterImage& gray) {
  const SobelGradients g = sobel_gradients(gray);
  RasterImage out(gray.width(), gray.height(), 1);
  float peak = 0;
  for (std::size_t i = 0; i < g.gx.size(); ++i) {
    out.data()[i] = std::sqrt(g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i]);
    peak = std::max(peak, out.data()[i]);
  }
  if (peak > 0)
    for (float& v : out.data()) v = std::min(1.0f, v / peak);
  return out;
}

}  // namespace gdb
