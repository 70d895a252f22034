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

// Dataset ingestion, network input construction, the multi-scale global
// branch, the adversarial training loop, and tiled inference with the
// iterative refinement pass.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gdb/classical.hpp"
#include "gdb/gdbnet.hpp"
#include "gdb/image.hpp"
#include "gdb/losses.hpp"
#include "gdb/optim.hpp"

namespace gdb {

// ---------------------------------------------------------------------------
// data

struct DocumentPair {
  RasterImage original;  // RGB
  BinaryMap gt;
  std::string stem;
};

struct Dataset {
  std::vector<DocumentPair> pairs;
  std::vector<std::string> skipped;  // "stem: reason"
};

// Pairs <root>/originals/<stem>.* with <root>/gt/<stem>.*. Unpaired or
// size-mismatched files are skipped and listed.
inline Dataset ingest_dataset(const std::filesystem::path& root, std::ostream* log = &std::cerr) {
  namespace fs = std::filesystem;
  const fs::path orig_dir = root / "originals", gt_dir = root / "gt";
  for (const fs::path& d : {orig_dir, gt_dir})
    if (!fs::is_directory(d)) throw DatasetError("missing dataset directory " + d.string());
  auto index = [](const fs::path& dir) {
    std::map<std::string, fs::path> m;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string ext = detail::lower_extension(e.path());
      if (e.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm"))
        m.emplace(e.path().stem().string(), e.path());
    }
    return m;
  };
  const auto originals = index(orig_dir), gts = index(gt_dir);
  Dataset ds;
  auto skip = [&](const std::string& stem, const std::string& why) {
    ds.skipped.push_back(stem + ": " + why);
    if (log) *log << "warning: skipping " << stem << " (" << why << ")\n";
  };
  for (const auto& [stem, path] : originals) {
    auto it = gts.find(stem);
    if (it == gts.end()) {
      skip(stem, "no ground truth");
      continue;
    }
    RasterImage img = to_rgb(load_image(path));
    BinaryMap gt = load_binary(it->second);
    if (img.width() != gt.width() || img.height() != gt.height()) {
      skip(stem, "size mismatch");
      continue;
    }
    ds.pairs.push_back({std::move(img), std::move(gt), stem});
  }
  for (const auto& [stem, path] : gts)
    if (!originals.count(stem)) skip(stem, "no original");
  if (ds.pairs.empty()) throw DatasetError("no usable document pairs under " + root.string());
  return ds;
}

inline void write_manifest(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stem,status,reason\n";
  for (const DocumentPair& p : ds.pairs) out << p.stem << ",used,\n";
  for (const std::string& s : ds.skipped) {
    const auto colon = s.find(": ");
    out << s.substr(0, colon) << ",skipped," << s.substr(colon + 2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// inputs

inline constexpr int kGlobalSize = 256;

struct SampleBundle {
  RasterImage I_p;     // RGB patch
  RasterImage I_grey;
  RasterImage I_m;     // prior mask (0/1)
  RasterImage I_e;     // prior edge map
  BinaryMap T_m;       // empty when no ground truth
  RasterImage T_e;
  int x = 0;
  int y = 0;
};

struct GlobalBundle {
  RasterImage I_f;   // RGB, global_size^2
  RasterImage I_fm;
  RasterImage I_fe;
  BinaryMap T_f_r;   // empty when no ground truth
};

// Document-level Otsu mask; patches crop it rather than thresholding alone.
inline BinaryMap document_prior_mask(const RasterImage& original) { return binarize_otsu(to_grayscale(original)); }

inline SampleBundle make_inputs(const RasterImage& original, const BinaryMap& full_mask, const BinaryMap* gt, int x,
                                int y, int patch) {
  if (x < 0 || y < 0 || x + patch > original.width() || y + patch > original.height())
    throw ArgumentError("patch at (" + std::to_string(x) + "," + std::to_string(y) + ") size " +
                        std::to_string(patch) + " leaves the " + std::to_string(original.width()) + "x" +
                        std::to_string(original.height()) + " document");
  SampleBundle b;
  b.x = x;
  b.y = y;
  b.I_p = crop(to_rgb(original), x, y, patch, patch);
  b.I_grey = to_grayscale(b.I_p);
  b.I_m = to_raster(crop(full_mask, x, y, patch, patch));
  b.I_e = sobel_edge(b.I_grey);
  if (gt) {
    b.T_m = crop(*gt, x, y, patch, patch);
    b.T_e = sobel_edge(to_raster(b.T_m));
  }
  return b;
}

inline SampleBundle make_inputs(const DocumentPair& doc, int x, int y, int patch) {
  return make_inputs(doc.original, document_prior_mask(doc.original), &doc.gt, x, y, patch);
}

inline GlobalBundle make_global(const RasterImage& original, const BinaryMap* gt, int size = kGlobalSize) {
  GlobalBundle g;
  g.I_f = resize_bilinear(to_rgb(original), size, size);
  const RasterImage grey = to_grayscale(g.I_f);
  g.I_fm = to_raster(binarize_otsu(grey));
  g.I_fe = sobel_edge(grey);
  if (gt) g.T_f_r = threshold(resize_bilinear(to_raster(*gt), size, size), 0.5f);
  return g;
}

inline GlobalBundle make_global(const DocumentPair& doc, int size = kGlobalSize) {
  return make_global(doc.original, &doc.gt, size);
}

inline Tensor to_tensor(const RasterImage& img) {
  Tensor t({1, img.channels(), img.height(), img.width()});
  std::copy(img.data().begin(), img.data().end(), t.data().begin());
  return t;
}

inline Tensor to_tensor(const BinaryMap& map) {
  Tensor t({1, 1, map.height(), map.width()});
  std::copy(map.data().begin(), map.data().end(), t.data().begin());
  return t;
}

inline RasterImage to_raster(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.n != 1) throw ShapeError("to_raster expects a single batch item, got " + s.str());
  RasterImage img(s.w, s.h, s.c);
  for (std::size_t i = 0; i < t.numel(); ++i) img.data()[i] = std::clamp(static_cast<float>(t[i]), 0.0f, 1.0f);
  return img;
}

// Coarse mask of the resized document, brought back to document size and
// cropped at the patch. `global_mask` is the coarse output on the
// GlobalBundle ([1,1,G,G]).
inline Tensor multiscale_crop(const Tensor& global_mask, int doc_w, int doc_h, int x, int y, int patch) {
  return crop(resize_bilinear(global_mask, doc_w, doc_h), x, y, patch, patch);
}

// Caches one coarse pass over a document's GlobalBundle.
class GlobalMaskCache {
 public:
  GlobalMaskCache(const CoarseNet& net, const RasterImage& original, int size = kGlobalSize)
      : net_(net), original_(original), size_(size) {}

  // Full-document coarse mask at document resolution.
  const Tensor& document_mask() {
    if (!mask_.defined()) {
      NoGradGuard guard;
      const GlobalBundle g = make_global(original_, nullptr, size_);
      const CoarseOutputs o = net_.forward(to_tensor(g.I_f), to_tensor(g.I_fm), to_tensor(g.I_fe));
      ++passes_;
      mask_ = resize_bilinear(o.mask, original_.width(), original_.height());
    }
    return mask_;
  }

  Tensor crop_at(int x, int y, int patch) { return crop(document_mask(), x, y, patch, patch); }
  int passes() const { return passes_; }

 private:
  const CoarseNet& net_;
  const RasterImage& original_;
  int size_;
  Tensor mask_;
  int passes_ = 0;
};

inline Tensor multiscale_global_mask(GlobalMaskCache& cache, int x, int y, int patch) {
  return cache.crop_at(x, y, patch);
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  int patch = 256;
  int global_size = kGlobalSize;
  int batch = 4;
  int steps = 1000;
  int d_steps_per_g = 1;
  std::uint64_t seed = 1;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  // 0 disables the adversarial terms and the discriminator updates
  bool adversarial = true;

  void validate() const {
    if (patch < 16 || patch % 16) throw ArgumentError("patch must be a positive multiple of 16");
    if (global_size < 16 || global_size % 16) throw ArgumentError("global_size must be a positive multiple of 16");
    if (batch < 1) throw ArgumentError("batch must be >= 1");
    if (steps < 0) throw ArgumentError("steps must be >= 0");
    if (d_steps_per_g < 1) throw ArgumentError("d_steps_per_g must be >= 1");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ArgumentError("learning rates must be positive");
    weights.validate();
  }
};

struct StepLosses {
  long step = 0;
  double dice = 0;
  double bce = 0;
  double l1 = 0;
  double adv = 0;
  double d_c = 0;
  double d_r = 0;
  double total = 0;
};

inline std::string log_header() { return "step,dice,bce,l1,adv,d_c,d_r,total"; }

inline std::string log_row(const StepLosses& l) {
  std::ostringstream s;
  s.precision(9);
  s << l.step << ',' << l.dice << ',' << l.bce << ',' << l.l1 << ',' << l.adv << ',' << l.d_c << ',' << l.d_r << ','
    << l.total;
  return s.str();
}

// Everything a checkpoint has to capture to resume training exactly.
struct TrainState {
  GdbModel model;
  AdamState opt_g;
  AdamState opt_dc;
  AdamState opt_dr;
  long step = 0;
  // patch geometry the model is trained at; inference defaults to it
  int patch = 256;
  int global_size = kGlobalSize;

  explicit TrainState(const TrainConfig& cfg)
      : model(cfg.model, cfg.seed),
        opt_g{cfg.lr_g, cfg.beta1, cfg.beta2},
        opt_dc{cfg.lr_d, cfg.beta1, cfg.beta2},
        opt_dr{cfg.lr_d, cfg.beta1, cfg.beta2},
        patch(cfg.patch),
        global_size(cfg.global_size) {}
};

class Trainer {
 public:
  Trainer(std::vector<DocumentPair> pairs, TrainConfig cfg)
      : Trainer(std::move(pairs), cfg, std::make_unique<TrainState>(cfg)) {}

  Trainer(std::vector<DocumentPair> pairs, TrainConfig cfg, std::unique_ptr<TrainState> state)
      : cfg_(std::move(cfg)), state_(std::move(state)) {
    cfg_.validate();
    if (pairs.empty()) throw DatasetError("training needs at least one document pair");
    for (DocumentPair& p : pairs) {
      if (p.original.width() < cfg_.patch || p.original.height() < cfg_.patch) {
        // small documents are mirrored out to one patch
        const int pw = std::max(0, cfg_.patch - p.original.width()), ph = std::max(0, cfg_.patch - p.original.height());
        p.original = pad_reflect_any(p.original, 0, pw, 0, ph);
        p.gt = pad_reflect_any(p.gt, 0, pw, 0, ph);
      }
      docs_.push_back(prepare(std::move(p)));
    }
  }

  // Optional trace of update order, for inspection and tests.
  void set_trace(std::vector<std::string>* trace) { trace_ = trace; }

  TrainState& state() { return *state_; }
  GdbModel& model() { return state_->model; }
  const TrainConfig& config() const { return cfg_; }

  // One iteration: generator forward on a batch of random patches,
  // discriminator update(s) on detached outputs, then a generator update
  // against the updated discriminators.
  StepLosses step() {
    GdbModel& m = state_->model;
    const long step_index = state_->step + 1;
    // the sampling stream is a pure function of (seed, step) so resumed runs match
    std::mt19937_64 rng(cfg_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(step_index));
    std::vector<Forward> batch;
    for (int b = 0; b < cfg_.batch; ++b) batch.push_back(generate(sample(rng)));

    StepLosses out;
    out.step = step_index;
    const Real inv_b = Real(1) / static_cast<Real>(cfg_.batch);
    if (cfg_.adversarial) {
      for (int k = 0; k < cfg_.d_steps_per_g; ++k) {
        m.d_coarse_params().zero_grad();
        m.d_refine_params().zero_grad();
        double dc = 0, dr = 0;
        for (Forward& f : batch) {
          const Doc& d = docs_[f.doc];
          Discriminator& Dc = m.d_coarse();
          Discriminator& Dr = m.d_refine();
          const Tensor ld = add(hinge_d(Dc.forward(f.I_p, f.T_m, true), Dc.forward(f.I_p, f.O_m.detach(), true)),
                                hinge_d(Dc.forward(d.I_f, d.T_f_r, true), Dc.forward(d.I_f, f.O_fm.detach(), true)));
          const Tensor lr = hinge_d(Dr.forward(f.I_p, f.T_m, true), Dr.forward(f.I_p, f.O_r.detach(), true));
          dc += ld.item();
          dr += lr.item();
          affine(ld, inv_b, 0).backward();
          affine(lr, inv_b, 0).backward();
        }
        out.d_c = dc / cfg_.batch;
        out.d_r = dr / cfg_.batch;
        guard_finite(out, "discriminator");
        std::vector<Tensor> pc = m.d_coarse_params().tensors(), pr = m.d_refine_params().tensors();
        adam_step(pc, state_->opt_dc);
        trace("d_coarse.update");
        adam_step(pr, state_->opt_dr);
        trace("d_refine.update");
      }
    }

    m.generator_params().zero_grad();
    for (Forward& f : batch) {
      const Doc& d = docs_[f.doc];
      SupervisionPack pack;
      pack.outputs = {f.O_m, f.O_e, f.O_fm_doc, f.O_r};
      pack.targets = {f.T_m, f.T_e, d.T_f, f.T_m};
      Tensor adv({1, 1, 1, 1}, Real(0));
      if (cfg_.adversarial)
        adv = generator_adversarial(m.d_coarse().forward(f.I_p, f.O_m), m.d_coarse().forward(d.I_f, f.O_fm),
                                    m.d_refine().forward(f.I_p, f.O_r));
      const GeneratorLoss g = total_generator_loss(pack, cfg_.weights, adv);
      out.dice += g.dice.item() / cfg_.batch;
      out.bce += g.bce.item() / cfg_.batch;
      out.l1 += g.l1.item() / cfg_.batch;
      out.adv += g.adv.item() / cfg_.batch;
      out.total += g.total.item() / cfg_.batch;
      guard_finite(out, "generator");
      affine(g.total, inv_b, 0).backward();
      trace("generator.backward");
    }
    std::vector<Tensor> pg = m.generator_params().tensors();
    adam_step(pg, state_->opt_g);
    trace("generator.update");
    state_->step = step_index;
    return out;
  }

  // Runs until `state().step` reaches `until`, invoking `on_step` after each.
  void run(long until, const std::function<void(const StepLosses&)>& on_step = {}) {
    while (state_->step < until) {
      const StepLosses l = step();
      if (on_step) on_step(l);
    }
  }

 private:
  struct Doc {
    DocumentPair pair;
    BinaryMap prior;  // document-level Otsu
    Tensor I_f, I_fm, I_fe, T_f_r, T_f;
  };

  struct Sample {
    std::size_t doc;
    int x, y;
  };

  struct Forward {
    std::size_t doc;
    Tensor I_p, T_m, T_e;
    Tensor O_m, O_e, O_fm, O_fm_doc, O_r;
  };

  Doc prepare(DocumentPair p) {
    Doc d;
    d.prior = document_prior_mask(p.original);
    const GlobalBundle g = make_global(p.original, &p.gt, cfg_.global_size);
    d.I_f = to_tensor(g.I_f);
    d.I_fm = to_tensor(g.I_fm);
    d.I_fe = to_tensor(g.I_fe);
    d.T_f_r = to_tensor(g.T_f_r);
    d.T_f = to_tensor(p.gt);
    d.pair = std::move(p);
    return d;
  }

  Sample sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, docs_.size() - 1);
    const std::size_t i = pick(rng);
    const RasterImage& img = docs_[i].pair.original;
    std::uniform_int_distribution<int> ux(0, img.width() - cfg_.patch), uy(0, img.height() - cfg_.patch);
    const int x = ux(rng);
    return {i, x, uy(rng)};
  }

  Forward generate(const Sample& s) {
    const Doc& d = docs_[s.doc];
    const GdbModel& m = state_->model;
    const SampleBundle b = make_inputs(d.pair.original, d.prior, &d.pair.gt, s.x, s.y, cfg_.patch);
    Forward f;
    f.doc = s.doc;
    f.I_p = to_tensor(b.I_p);
    f.T_m = to_tensor(b.T_m);
    f.T_e = to_tensor(b.T_e);
    const CoarseOutputs local = m.coarse().forward(f.I_p, to_tensor(b.I_m), to_tensor(b.I_e));
    const CoarseOutputs global = m.coarse().forward(d.I_f, d.I_fm, d.I_fe);
    f.O_m = local.mask;
    f.O_e = local.edge;
    f.O_fm = global.mask;
    f.O_fm_doc = resize_bilinear(global.mask, d.pair.original.width(), d.pair.original.height());
    const Tensor O_gm = crop(f.O_fm_doc, s.x, s.y, cfg_.patch, cfg_.patch);
    f.O_r = m.refine().forward(to_tensor(b.I_grey), f.O_m, f.O_e, O_gm);
    return f;
  }

  void guard_finite(const StepLosses& l, const char* phase) const {
    for (double v : {l.dice, l.bce, l.l1, l.adv, l.d_c, l.d_r, l.total})
      if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite ") + phase + " loss at step " + std::to_string(l.step) +
                             ": " + log_header() + " = " + log_row(l));
  }

  void trace(const char* event) {
    if (trace_) trace_->push_back(event);
  }

  TrainConfig cfg_;
  std::unique_ptr<TrainState> state_;
  std::vector<Doc> docs_;
  std::vector<std::string>* trace_ = nullptr;
};

// ---------------------------------------------------------------------------
// inference

struct PatchGrid {
  int patch = 256;
  int stride = 128;
  int width = 0;         // original
  int height = 0;
  int padded_width = 0;
  int padded_height = 0;
  std::vector<std::pair<int, int>> origins;  // (x, y) in the padded frame
};

// Pads right/bottom so patches at multiples of `stride` tile the image exactly.
inline PatchGrid make_grid(int width, int height, int patch, int stride) {
  if (width < 1 || height < 1) throw ArgumentError("cannot tile an empty image");
  if (patch < 1 || stride < 1 || stride > patch) throw ArgumentError("grid needs 1 <= stride <= patch");
  PatchGrid g{patch, stride, width, height};
  auto span = [&](int n) { return n <= patch ? patch : patch + (n - patch + stride - 1) / stride * stride; };
  g.padded_width = span(width);
  g.padded_height = span(height);
  for (int y = 0; y + patch <= g.padded_height; y += stride)
    for (int x = 0; x + patch <= g.padded_width; x += stride) g.origins.emplace_back(x, y);
  return g;
}

template <class Image>
Image pad_to_grid(const Image& img, const PatchGrid& g) {
  return pad_reflect_any(img, 0, g.padded_width - g.width, 0, g.padded_height - g.height);
}

// Averages overlapping patches (one RasterImage per grid origin, 1 channel)
// and crops the padding back off. Accumulation runs in origin order.
inline RasterImage stitch(const PatchGrid& g, const std::vector<RasterImage>& patches) {
  if (patches.size() != g.origins.size()) throw ArgumentError("stitch needs one patch per grid origin");
  std::vector<double> acc(static_cast<std::size_t>(g.padded_width) * g.padded_height, 0.0);
  std::vector<int> count(acc.size(), 0);
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const auto [ox, oy] = g.origins[k];
    const RasterImage& p = patches[k];
    if (p.width() != g.patch || p.height() != g.patch) throw ShapeError("stitched patch has the wrong size");
    for (int y = 0; y < g.patch; ++y)
      for (int x = 0; x < g.patch; ++x) {
        const std::size_t i = static_cast<std::size_t>(oy + y) * g.padded_width + ox + x;
        acc[i] += p.at(y, x);
        ++count[i];
      }
  }
  RasterImage out(g.width, g.height, 1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.padded_width + x;
      out.at(y, x) = static_cast<float>(acc[i] / count[i]);
    }
  return out;
}

inline std::vector<RasterImage> tile(const RasterImage& img, const PatchGrid& g) {
  const RasterImage padded = pad_to_grid(img, g);
  std::vector<RasterImage> out;
  for (const auto& [x, y] : g.origins) out.push_back(crop(padded, x, y, g.patch, g.patch));
  return out;
}

struct InferenceOptions {
  bool use_multiscale = true;
  int iterations = 0;
  int patch = 256;
  int stride = 128;
  int global_size = kGlobalSize;
  int threads = 0;  // 0: GDB_THREADS or hardware concurrency
};

// Stitched network outputs at document resolution plus the binarization.
struct InferenceResult {
  BinaryMap mask;
  RasterImage refined;
  RasterImage coarse_mask;
  RasterImage coarse_edge;
};

inline int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GDB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

// Priors for one inference pass: either Otsu/Sobel (first pass) or the
// previous pass's coarse outputs (iterative operation).
struct Priors {
  RasterImage mask;  // document resolution, 0/1
  std::optional<RasterImage> edge;  // document resolution; absent: Sobel per patch
};

inline InferenceResult run_pass(const RasterImage& document, const GdbModel& model, const InferenceOptions& opt,
                                const Priors& priors) {
  if (opt.patch % 16) throw ArgumentError("inference patch must be a multiple of 16");
  const RasterImage rgb = to_rgb(document);
  const PatchGrid grid = make_grid(rgb.width(), rgb.height(), opt.patch, opt.stride);
  const RasterImage padded = pad_to_grid(rgb, grid);
  const RasterImage prior_mask = pad_to_grid(priors.mask, grid);
  const RasterImage prior_edge = priors.edge ? pad_to_grid(*priors.edge, grid) : RasterImage();
  RasterImage global_padded;
  if (opt.use_multiscale) {
    GlobalMaskCache cache(model.coarse(), rgb, opt.global_size);
    global_padded = pad_to_grid(to_raster(cache.document_mask()), grid);
  }

  const std::size_t n = grid.origins.size();
  std::vector<RasterImage> refined(n), coarse_m(n), coarse_e(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    NoGradGuard guard;  // per thread
    for (std::size_t k = next++; k < n; k = next++) {
      const auto [x, y] = grid.origins[k];
      const RasterImage I_p = crop(padded, x, y, opt.patch, opt.patch);
      const RasterImage I_grey = to_grayscale(I_p);
      const RasterImage I_m = crop(prior_mask, x, y, opt.patch, opt.patch);
      const RasterImage I_e = priors.edge ? crop(prior_edge, x, y, opt.patch, opt.patch) : sobel_edge(I_grey);
      const CoarseOutputs c = model.coarse().forward(to_tensor(I_p), to_tensor(I_m), to_tensor(I_e));
      const Tensor O_gm = opt.use_multiscale ? to_tensor(crop(global_padded, x, y, opt.patch, opt.patch)) : c.mask;
      refined[k] = to_raster(model.refine().forward(to_tensor(I_grey), c.mask, c.edge, O_gm));
      coarse_m[k] = to_raster(c.mask);
      coarse_e[k] = to_raster(c.edge);
    }
  };
  const int workers = std::min<int>(worker_count(opt.threads), static_cast<int>(n));
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  InferenceResult r;
  r.refined = stitch(grid, refined);
  r.coarse_mask = stitch(grid, coarse_m);
  r.coarse_edge = stitch(grid, coarse_e);
  r.mask = threshold(r.refined, 0.5f);
  return r;
}

}  // namespace detail

// First pass with Otsu/Sobel priors.
inline InferenceResult infer_document(const RasterImage& document, const GdbModel& model,
                                      const InferenceOptions& opt = {}) {
  return detail::run_pass(document, model, opt, {to_raster(document_prior_mask(document)), std::nullopt});
}

// Re-runs the pipeline with the previous coarse outputs as local priors:
// the thresholded coarse mask replaces Otsu and the coarse edge map replaces
// Sobel. The global branch keeps its own inputs.
inline InferenceResult iterate_once(const RasterImage& document, const InferenceResult& previous,
                                    const GdbModel& model, const InferenceOptions& opt = {}) {
  return detail::run_pass(document, model, opt, {to_raster(threshold(previous.coarse_mask, 0.5f)), previous.coarse_edge});
}

inline InferenceResult binarize_document_full(const RasterImage& document, const GdbModel& model,
                                              const InferenceOptions& opt = {}) {
  if (opt.iterations < 0) throw ArgumentError("iteration count must be >= 0");
  InferenceResult r = infer_document(document, model, opt);
  for (int i = 0; i < opt.iterations; ++i) r = iterate_once(document, r, model, opt);
  return r;
}

inline BinaryMap binarize_document(const RasterImage& document, const GdbModel& model,
                                   const InferenceOptions& opt = {}) {
  return binarize_document_full(document, model, opt).mask;
}

}  // namespace gdb
