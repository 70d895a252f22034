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

// Synthetic degraded documents with known ground truth: rows of glyph-like
// pen strokes on tinted, noisy paper, plus a mirrored, blurred and fainter
// copy of other strokes standing in for ink bleeding through from the back.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gdb/image.hpp"

namespace gdb {

struct SyntheticStyle {
  float ink = 0.12f;          // front-side stroke intensity
  float ink_fade = 0.25f;     // extra lightness where the ink has faded
  float bleed = 0.30f;        // bleed-through intensity before blending
  float bleed_opacity = 0.85f;
  float stain = 0.22f;
  float noise = 0.04f;        // per-pixel Gaussian noise sigma
  int line_height = 22;
  int stroke_width = 3;
};

namespace detail {

struct Segment {
  float x0, y0, x1, y1;
};

// Random strokes grouped into "glyphs" along text lines.
inline std::vector<Segment> glyph_strokes(int w, int h, int line_height, std::mt19937_64& rng) {
  std::vector<Segment> out;
  std::uniform_real_distribution<float> u(0, 1);
  for (int base = line_height; base + 4 < h; base += line_height) {
    float x = 6 + 10 * u(rng);
    while (x + 10 < w - 6) {
      const float gw = 6 + 6 * u(rng), gh = line_height * (0.4f + 0.3f * u(rng));
      const int strokes = 2 + static_cast<int>(3 * u(rng));
      for (int s = 0; s < strokes; ++s) {
        const float ax = x + gw * u(rng), ay = base - gh * u(rng);
        const float bx = x + gw * u(rng), by = base - gh * u(rng);
        out.push_back({ax, ay, bx, by});
      }
      x += gw + 3 + 8 * u(rng) * (u(rng) < 0.2f ? 2.0f : 0.5f);
    }
  }
  return out;
}

inline void rasterize(BinaryMap& m, const std::vector<Segment>& segs, float width) {
  const float r = width / 2;
  for (const Segment& s : segs) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - r)));
    const int x1 = std::min(m.width() - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - r)));
    const int y1 = std::min(m.height() - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + r)));
    const float dx = s.x1 - s.x0, dy = s.y1 - s.y0, len2 = dx * dx + dy * dy;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        float t = len2 > 0 ? ((x - s.x0) * dx + (y - s.y0) * dy) / len2 : 0;
        t = std::clamp(t, 0.0f, 1.0f);
        const float px = s.x0 + t * dx - x, py = s.y0 + t * dy - y;
        if (px * px + py * py <= r * r) m.at(y, x) = 1;
      }
  }
}

inline std::vector<float> box_blur(const std::vector<float>& v, int w, int h, int radius) {
  std::vector<float> tmp(v.size()), out(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0;
      for (int d = -radius; d <= radius; ++d) s += v[y * w + reflect_index(x + d, w)];
      tmp[y * w + x] = s / (2 * radius + 1);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0;
      for (int d = -radius; d <= radius; ++d) s += tmp[reflect_index(y + d, h) * w + x];
      out[y * w + x] = s / (2 * radius + 1);
    }
  return out;
}

}  // namespace detail

struct SyntheticDocument {
  RasterImage image;  // RGB
  BinaryMap gt;
};

inline SyntheticDocument synthetic_document(int w, int h, std::uint64_t seed, const SyntheticStyle& style = {}) {
  std::mt19937_64 rng(seed);
  BinaryMap text(w, h), bleed(w, h);
  detail::rasterize(text, detail::glyph_strokes(w, h, style.line_height, rng), static_cast<float>(style.stroke_width));
  // the back page: different strokes, mirrored left-right
  BinaryMap back(w, h);
  detail::rasterize(back, detail::glyph_strokes(w, h, style.line_height, rng), style.stroke_width + 1.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) bleed.at(y, x) = back.at(y, w - 1 - x);
  std::vector<float> bleed_v(bleed.data().begin(), bleed.data().end());
  bleed_v = detail::box_blur(bleed_v, w, h, 1);

  std::uniform_real_distribution<float> u(0, 1);
  std::normal_distribution<float> noise(0, style.noise);
  const float tint[3] = {0.88f + 0.06f * u(rng), 0.80f + 0.06f * u(rng), 0.66f + 0.08f * u(rng)};
  const float cx = w * u(rng), cy = h * u(rng), radius = 0.5f * std::max(w, h) * (0.5f + u(rng));
  const float fx = 0.02f + 0.03f * u(rng), fy = 0.02f + 0.03f * u(rng), phase = 6.28f * u(rng);
  SyntheticDocument doc{RasterImage(w, h, 3), text};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // broad stain darkening one region of the page
      const float d = std::hypot(x - cx, y - cy) / radius;
      const float stain = style.stain * std::exp(-d * d);
      const float fade = style.ink_fade * (0.5f + 0.5f * std::sin(fx * x + fy * y + phase));
      const float b = style.bleed_opacity * bleed_v[y * w + x];
      const float n = noise(rng);
      for (int c = 0; c < 3; ++c) {
        float v = tint[c] - stain;
        v = v * (1 - b) + style.bleed * tint[c] * b;
        if (text.at(y, x)) v = style.ink + fade + 0.05f * c;
        doc.image.at(c, y, x) = std::clamp(v + n, 0.0f, 1.0f);
      }
    }
  return doc;
}

}  // namespace gdb
