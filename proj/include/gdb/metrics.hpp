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

// DIBCO-style evaluation: F-measure, pseudo F-measure (skeleton recall),
// PSNR and DRD, plus a per-directory report.

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gdb/error.hpp"
#include "gdb/image.hpp"

namespace gdb {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

inline void require_same_dims(const BinaryMap& a, const BinaryMap& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw ArgumentError("metric inputs differ in size: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
}

// Text (1) is the positive class.
inline ConfusionCounts confusion(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_dims(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.area(); ++i) {
    const bool p = pred.data()[i], g = gt.data()[i];
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace detail {

inline double f_score(double precision, double recall) {
  return precision + recall > 0 ? 100.0 * 2 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace detail

// 100 * 2PR / (P + R). Undefined precision or recall counts as 0; a pair with
// no text anywhere scores 100.
inline double fmeasure(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return 100.0;
  const double p = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  const double r = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
  return detail::f_score(p, r);
}

inline double fmeasure(const BinaryMap& pred, const BinaryMap& gt) { return fmeasure(confusion(pred, gt)); }

// 10 log10(1 / MSE) on {0,1} maps; +infinity for identical maps.
inline double psnr(const BinaryMap& pred, const BinaryMap& gt) {
  const ConfusionCounts c = confusion(pred, gt);
  const std::uint64_t wrong = c.fp + c.fn;
  if (wrong == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(c.total()) / static_cast<double>(wrong));
}

// 5x5 reciprocal-distance weights, zero at the center, normalized to sum 1.
using DrdWeightMatrix = std::array<std::array<double, 5>, 5>;

inline const DrdWeightMatrix& drd_weights() {
  static const DrdWeightMatrix w = [] {
    DrdWeightMatrix m{};
    double total = 0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const int di = i - 2, dj = j - 2;
        m[i][j] = di || dj ? 1.0 / std::sqrt(static_cast<double>(di * di + dj * dj)) : 0.0;
        total += m[i][j];
      }
    for (auto& row : m)
      for (double& v : row) v /= total;
    return m;
  }();
  return w;
}

// Number of 8x8 ground-truth blocks holding both text and background. Border
// blocks narrower than 8 pixels are counted like full ones.
inline std::size_t nonuniform_blocks(const BinaryMap& gt, int block = 8) {
  std::size_t n = 0;
  for (int by = 0; by < gt.height(); by += block)
    for (int bx = 0; bx < gt.width(); bx += block) {
      bool any0 = false, any1 = false;
      for (int y = by; y < std::min(by + block, gt.height()); ++y)
        for (int x = bx; x < std::min(bx + block, gt.width()); ++x) (gt.at(y, x) ? any1 : any0) = true;
      n += any0 && any1;
    }
  return n;
}

// Sum over flipped pixels of the weighted disagreement between the predicted
// value and the ground truth in its 5x5 neighbourhood, divided by the number
// of non-uniform blocks (at least 1). Cells outside the image contribute 0.
inline double drd(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_dims(pred, gt);
  const auto& w = drd_weights();
  double total = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      const int b = pred.at(y, x);
      if (b == gt.at(y, x)) continue;
      for (int i = 0; i < 5; ++i) {
        const int yy = y + i - 2;
        if (yy < 0 || yy >= gt.height()) continue;
        for (int j = 0; j < 5; ++j) {
          const int xx = x + j - 2;
          if (xx < 0 || xx >= gt.width()) continue;
          if (gt.at(yy, xx) != b) total += w[i][j];
        }
      }
    }
  return total / static_cast<double>(std::max<std::size_t>(1, nonuniform_blocks(gt)));
}

// Zhang-Suen thinning with alternating sub-iterations until nothing changes.
// Pixels outside the image are background.
inline BinaryMap thin_zhang_suen(const BinaryMap& img) {
  BinaryMap cur = img;
  const int h = img.height(), w = img.width();
  auto px = [&](int y, int x) -> int { return y < 0 || y >= h || x < 0 || x >= w ? 0 : cur.at(y, x); };
  std::vector<std::size_t> doomed;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!cur.at(y, x)) continue;
          // P2..P9 clockwise from north
          const int p[8] = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                            px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            a += !p[k] && p[(k + 1) % 8];
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool c = pass == 0 ? !(p[0] && p[2] && p[4]) : !(p[0] && p[2] && p[6]);
          const bool d = pass == 0 ? !(p[2] && p[4] && p[6]) : !(p[0] && p[4] && p[6]);
          if (c && d) doomed.push_back(static_cast<std::size_t>(y) * w + x);
        }
      for (std::size_t i : doomed) cur.data()[i] = 0;
      changed = changed || !doomed.empty();
    }
  }
  return cur;
}

// Precision as usual, recall measured on the ground-truth skeleton. Falls back
// to the plain F-measure when the skeleton is empty.
inline double pseudo_fmeasure(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_dims(pred, gt);
  const BinaryMap skel = thin_zhang_suen(gt);
  std::uint64_t skel_n = 0, covered = 0;
  for (std::size_t i = 0; i < skel.area(); ++i)
    if (skel.data()[i]) {
      ++skel_n;
      covered += pred.data()[i];
    }
  const ConfusionCounts c = confusion(pred, gt);
  if (skel_n == 0) return fmeasure(c);
  const double p = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
  return detail::f_score(p, static_cast<double>(covered) / skel_n);
}

struct MetricReport {
  double fm = 0;
  double p_fm = 0;
  double psnr = 0;
  double drd = 0;
};

inline MetricReport evaluate(const BinaryMap& pred, const BinaryMap& gt) {
  return {fmeasure(pred, gt), pseudo_fmeasure(pred, gt), psnr(pred, gt), drd(pred, gt)};
}

struct DatasetReport {
  std::vector<std::pair<std::string, MetricReport>> rows;
  MetricReport mean;
  std::size_t infinite_psnr = 0;
  std::vector<std::string> skipped;  // "stem: reason"
};

namespace detail {

inline bool is_image_file(const std::filesystem::path& p) {
  const std::string ext = lower_extension(p);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

inline std::map<std::string, std::filesystem::path> images_by_stem(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.emplace(e.path().stem().string(), e.path());
  return out;
}

}  // namespace detail

// Means are arithmetic over evaluated images; infinite PSNR values are left
// out of the PSNR mean and counted separately.
inline DatasetReport dataset_report(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  const auto preds = detail::images_by_stem(pred_dir);
  const auto gts = detail::images_by_stem(gt_dir);
  DatasetReport r;
  double fm = 0, pfm = 0, ps = 0, dr = 0;
  std::size_t finite = 0;
  for (const auto& [stem, gt_path] : gts) {
    auto it = preds.find(stem);
    if (it == preds.end()) {
      r.skipped.push_back(stem + ": no prediction");
      continue;
    }
    const BinaryMap gt = load_binary(gt_path);
    const BinaryMap pred = load_binary(it->second);
    if (pred.width() != gt.width() || pred.height() != gt.height()) {
      r.skipped.push_back(stem + ": size mismatch");
      continue;
    }
    const MetricReport m = evaluate(pred, gt);
    r.rows.emplace_back(stem, m);
    fm += m.fm;
    pfm += m.p_fm;
    dr += m.drd;
    if (std::isinf(m.psnr)) ++r.infinite_psnr;
    else {
      ps += m.psnr;
      ++finite;
    }
  }
  for (const auto& [stem, p] : preds)
    if (!gts.count(stem)) r.skipped.push_back(stem + ": no ground truth");
  if (r.rows.empty()) throw DatasetError("no matching prediction/ground-truth pairs");
  const double n = static_cast<double>(r.rows.size());
  r.mean = {fm / n, pfm / n, finite ? ps / finite : std::numeric_limits<double>::infinity(), dr / n};
  return r;
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

inline std::string report_row(const std::string& label, const MetricReport& m) {
  return label + "," + format_metric(m.fm) + "," + format_metric(m.p_fm) + "," + format_metric(m.psnr) + "," +
         format_metric(m.drd);
}

inline std::string report_csv(const DatasetReport& r) {
  std::string out = "stem,fm,pfm,psnr,drd\n";
  for (const auto& [stem, m] : r.rows) out += report_row(stem, m) + "\n";
  out += report_row("MEAN", r.mean) + "\n";
  if (r.infinite_psnr)
    out += "# " + std::to_string(r.infinite_psnr) + " image(s) with infinite PSNR excluded from the PSNR mean\n";
  for (const std::string& s : r.skipped) out += "# skipped " + s + "\n";
  return out;
}

inline void write_report(const DatasetReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << report_csv(r);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace gdb
