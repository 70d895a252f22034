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

// The binarization network: gated convolutions, gated residual blocks, the
// two-branch coarse sub-network, the dilated refinement sub-network and the
// spectrally normalized patch discriminators.
//
// Layout of the coarse sub-network for base width b (input H x W, H and W
// divisible by 16):
//
//   enc0  5 -> b    stride 2        H/2
//   enc1  b -> 2b   stride 2        H/4
//   enc2 2b -> 4b   stride 2        H/8
//   enc3 4b -> 8b   stride 2        H/16
//   res0..res{n-1}  8b -> 8b        H/16
//   per branch (mask, edge), skips concatenated on the decoder input:
//   dec0 [res, enc3] 16b -> 4b  up 2   H/8
//   dec1 [dec0, enc2] 8b -> 2b  up 2   H/4
//   dec2 [dec1, enc1] 4b -> b   up 2   H/2
//   dec3 [dec2, enc0] 2b -> b   up 2   H
//   dec4  b -> b    stride 1        H
//   head  1x1 conv b -> 1, sigmoid

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gdb/conv.hpp"
#include "gdb/optim.hpp"
#include "gdb/tensor.hpp"

namespace gdb {

enum class Activation { kLeakyReLU, kReLU, kSigmoid, kIdentity };

inline Tensor activate(const Tensor& x, Activation kind, Real leak = Real(0.2)) {
  switch (kind) {
    case Activation::kLeakyReLU:
      return leaky_relu(x, leak);
    case Activation::kReLU:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

// Named parameter tensors in registration order. Handles share storage with
// the layers that own them.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter name " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
  }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : entries_) out.push_back(t);
    return out;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter " + name);
    return entries_[it->second].second;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }
  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }
  void append(const ParameterSet& other) {
    for (const auto& [name, t] : other.entries_) add(name, t);
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

inline Tensor kaiming_weight(Shape s, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
  Tensor w = Tensor::parameter(s);
  for (Real& v : w.data()) v = static_cast<Real>(normal(rng));
  return w;
}

}  // namespace detail

struct GatedLayerSpec {
  int in_ch = 1;
  int out_ch = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int padding = -1;  // -1: "same" padding for stride-1 layers, dilation*(k-1)/2
  Activation feature_activation = Activation::kLeakyReLU;
  bool is_transpose = false;

  ConvGeometry geometry() const {
    const int pad = padding >= 0 ? padding : dilation * (kernel - 1) / 2;
    return {stride, pad, dilation};
  }
};

// sigmoid(W_g * x) . phi(W_f * x), with both filters sharing one geometry.
class GatedConv {
 public:
  GatedConv() = default;
  GatedConv(const GatedLayerSpec& spec, const std::string& name, ParameterSet& params, std::mt19937_64& rng)
      : spec_(spec) {
    const Shape ws = spec.is_transpose ? Shape{spec.in_ch, spec.out_ch, spec.kernel, spec.kernel}
                                       : Shape{spec.out_ch, spec.in_ch, spec.kernel, spec.kernel};
    const int fan_in = spec.is_transpose ? spec.in_ch * spec.kernel * spec.kernel / (spec.stride * spec.stride)
                                         : spec.in_ch * spec.kernel * spec.kernel;
    for (auto* branch : {&gating_, &feature_}) {
      branch->weight = detail::kaiming_weight(ws, fan_in, rng);
      branch->bias = Tensor::parameter({spec.out_ch});
      branch->geom = spec.geometry();
    }
    params.add(name + ".gating.weight", gating_.weight);
    params.add(name + ".gating.bias", gating_.bias);
    params.add(name + ".feature.weight", feature_.weight);
    params.add(name + ".feature.bias", feature_.bias);
  }

  Tensor forward(const Tensor& x) const {
    if (x.shape().c != spec_.in_ch)
      throw ShapeError("gated layer expects " + std::to_string(spec_.in_ch) + " channels, got " + x.shape().str());
    const Tensor gate = spec_.is_transpose ? conv_transpose2d(x, gating_) : conv2d(x, gating_);
    const Tensor feat = spec_.is_transpose ? conv_transpose2d(x, feature_) : conv2d(x, feature_);
    return mul(sigmoid(gate), activate(feat, spec_.feature_activation));
  }

  const GatedLayerSpec& spec() const { return spec_; }
  ConvParams& gating() { return gating_; }
  ConvParams& feature() { return feature_; }

 private:
  GatedLayerSpec spec_;
  ConvParams gating_;
  ConvParams feature_;
};

inline Tensor gated_conv_forward(const Tensor& input, const GatedConv& layer) { return layer.forward(input); }

// input + gated(phi(gated(input))); stride 1 and same padding keep the shape.
class GatedResidualBlock {
 public:
  GatedResidualBlock() = default;
  GatedResidualBlock(int channels, const std::string& name, ParameterSet& params, std::mt19937_64& rng,
                     Activation phi = Activation::kLeakyReLU)
      : phi_(phi) {
    const GatedLayerSpec spec{channels, channels, 3, 1, 1, -1, phi, false};
    first_ = GatedConv(spec, name + ".conv0", params, rng);
    second_ = GatedConv(spec, name + ".conv1", params, rng);
  }

  Tensor forward(const Tensor& x) const {
    if (x.shape().c != first_.spec().in_ch) throw ShapeError("residual block channel mismatch: " + x.shape().str());
    return add(x, second_.forward(activate(first_.forward(x), phi_)));
  }

  GatedConv& first() { return first_; }
  GatedConv& second() { return second_; }

 private:
  Activation phi_ = Activation::kLeakyReLU;
  GatedConv first_;
  GatedConv second_;
};

inline Tensor gated_residual_block(const Tensor& input, const GatedResidualBlock& block) {
  return block.forward(input);
}

// 1x1 convolution followed by a sigmoid; maps features to a probability map.
class SigmoidHead {
 public:
  SigmoidHead() = default;
  SigmoidHead(int in_ch, const std::string& name, ParameterSet& params, std::mt19937_64& rng) {
    conv_.weight = detail::kaiming_weight({1, in_ch, 1, 1}, in_ch, rng);
    conv_.bias = Tensor::parameter({1});
    params.add(name + ".weight", conv_.weight);
    params.add(name + ".bias", conv_.bias);
  }
  Tensor forward(const Tensor& x) const { return sigmoid(conv2d(x, conv_)); }

 private:
  ConvParams conv_;
};

struct CoarseNetConfig {
  std::vector<GatedLayerSpec> encoder;
  int n_res = 4;
  std::vector<GatedLayerSpec> decoder_mask;
  std::vector<GatedLayerSpec> decoder_edge;
  // (encoder index, decoder index): encoder output concatenated onto that decoder layer's input
  std::vector<std::pair<int, int>> skip_links;

  static CoarseNetConfig standard(int base = 32, int n_res = 4) {
    if (base < 1) throw ArgumentError("base width must be positive");
    if (n_res < 0) throw ArgumentError("n_res must be non-negative");
    const int b = base;
    CoarseNetConfig cfg;
    cfg.n_res = n_res;
    cfg.encoder = {{5, b, 3, 2, 1, 1}, {b, 2 * b, 3, 2, 1, 1}, {2 * b, 4 * b, 3, 2, 1, 1}, {4 * b, 8 * b, 3, 2, 1, 1}};
    std::vector<GatedLayerSpec> dec = {
        {16 * b, 4 * b, 4, 2, 1, 1, Activation::kLeakyReLU, true},
        {8 * b, 2 * b, 4, 2, 1, 1, Activation::kLeakyReLU, true},
        {4 * b, b, 4, 2, 1, 1, Activation::kLeakyReLU, true},
        {2 * b, b, 4, 2, 1, 1, Activation::kLeakyReLU, true},
        {b, b, 3, 1, 1, 1, Activation::kLeakyReLU, true},
    };
    cfg.decoder_mask = dec;
    cfg.decoder_edge = dec;
    cfg.skip_links = {{3, 0}, {2, 1}, {1, 2}, {0, 3}};
    return cfg;
  }

  void validate() const {
    if (encoder.size() != 4) throw ArgumentError("coarse encoder must have exactly 4 gated layers");
    if (decoder_mask.size() != 5 || decoder_edge.size() != 5)
      throw ArgumentError("each coarse decoder branch must have exactly 5 gated layers");
    if (skip_links.size() != 4) throw ArgumentError("coarse network must have exactly 4 skip connections");
    for (std::size_t i = 0; i < 5; ++i) {
      const auto &m = decoder_mask[i], &e = decoder_edge[i];
      if (m.in_ch != e.in_ch || m.out_ch != e.out_ch || m.kernel != e.kernel || m.stride != e.stride ||
          m.dilation != e.dilation || m.padding != e.padding || m.is_transpose != e.is_transpose)
        throw ArgumentError("coarse decoder branches must share geometry");
    }
    for (const auto& [enc, dec] : skip_links)
      if (enc < 0 || enc >= 4 || dec < 0 || dec >= 5) throw ArgumentError("skip link index out of range");
  }
};

struct CoarseOutputs {
  Tensor mask;
  Tensor edge;
};

class CoarseNet {
 public:
  CoarseNet() = default;
  CoarseNet(const CoarseNetConfig& cfg, ParameterSet& params, std::mt19937_64& rng, const std::string& name = "coarse")
      : cfg_(cfg) {
    cfg.validate();
    for (std::size_t i = 0; i < cfg.encoder.size(); ++i)
      encoder_.emplace_back(cfg.encoder[i], name + ".enc" + std::to_string(i), params, rng);
    const int bottleneck = cfg.encoder.back().out_ch;
    for (int i = 0; i < cfg.n_res; ++i)
      residual_.emplace_back(bottleneck, name + ".res" + std::to_string(i), params, rng);
    for (std::size_t i = 0; i < 5; ++i)
      mask_branch_.emplace_back(cfg.decoder_mask[i], name + ".mask.dec" + std::to_string(i), params, rng);
    mask_head_ = SigmoidHead(cfg.decoder_mask.back().out_ch, name + ".mask.head", params, rng);
    for (std::size_t i = 0; i < 5; ++i)
      edge_branch_.emplace_back(cfg.decoder_edge[i], name + ".edge.dec" + std::to_string(i), params, rng);
    edge_head_ = SigmoidHead(cfg.decoder_edge.back().out_ch, name + ".edge.head", params, rng);
  }

  // Inputs are [N,3,H,W] document, [N,1,H,W] prior mask and prior edge map.
  CoarseOutputs forward(const Tensor& document, const Tensor& mask, const Tensor& edge) const {
    const Shape& s = document.shape();
    if (s.c != 3 || mask.shape() != Shape{s.n, 1, s.h, s.w} || edge.shape() != Shape{s.n, 1, s.h, s.w})
      throw ShapeError("coarse inputs must be a 3-channel document with matching 1-channel mask and edge");
    if (s.h % 16 || s.w % 16) throw ShapeError("coarse input size must be divisible by 16, got " + s.str());
    std::vector<Tensor> enc;
    Tensor x = concat_channels({document, mask, edge});
    for (const GatedConv& layer : encoder_) {
      x = layer.forward(x);
      enc.push_back(x);
    }
    for (const GatedResidualBlock& block : residual_) x = block.forward(x);
    return {decode(mask_branch_, mask_head_, x, enc), decode(edge_branch_, edge_head_, x, enc)};
  }

  const CoarseNetConfig& config() const { return cfg_; }
  std::vector<GatedConv>& encoder() { return encoder_; }

 private:
  Tensor decode(const std::vector<GatedConv>& branch, const SigmoidHead& head, Tensor x,
                const std::vector<Tensor>& enc) const {
    for (std::size_t i = 0; i < branch.size(); ++i) {
      for (const auto& [e, d] : cfg_.skip_links)
        if (d == static_cast<int>(i)) x = concat_channels({x, enc[e]});
      x = branch[i].forward(x);
    }
    return head.forward(x);
  }

  CoarseNetConfig cfg_;
  std::vector<GatedConv> encoder_;
  std::vector<GatedResidualBlock> residual_;
  std::vector<GatedConv> mask_branch_;
  std::vector<GatedConv> edge_branch_;
  SigmoidHead mask_head_;
  SigmoidHead edge_head_;
};

struct RefineNetConfig {
  int base = 32;
  std::vector<int> dilation_schedule = {2, 4, 8, 16};

  void validate() const {
    if (base < 1) throw ArgumentError("base width must be positive");
    if (std::none_of(dilation_schedule.begin(), dilation_schedule.end(), [](int d) { return d > 1; }))
      throw ArgumentError("refinement network needs at least one dilated layer");
  }
};

// Encoder down to H/4, a stack of dilated gated layers, then a mirrored decoder
// with skips from the two full- and half-resolution encoder stages.
class RefineNet {
 public:
  RefineNet() = default;
  RefineNet(const RefineNetConfig& cfg, ParameterSet& params, std::mt19937_64& rng, const std::string& name = "refine")
      : cfg_(cfg) {
    cfg.validate();
    const int b = cfg.base;
    enc_.emplace_back(GatedLayerSpec{4, b, 3, 1, 1}, name + ".enc0", params, rng);
    enc_.emplace_back(GatedLayerSpec{b, 2 * b, 3, 2, 1, 1}, name + ".enc1", params, rng);
    enc_.emplace_back(GatedLayerSpec{2 * b, 4 * b, 3, 2, 1, 1}, name + ".enc2", params, rng);
    for (std::size_t i = 0; i < cfg.dilation_schedule.size(); ++i) {
      const int d = cfg.dilation_schedule[i];
      dilated_.emplace_back(GatedLayerSpec{4 * b, 4 * b, 3, 1, d, d}, name + ".dilated" + std::to_string(i), params,
                            rng);
    }
    dec_.emplace_back(GatedLayerSpec{8 * b, 2 * b, 4, 2, 1, 1, Activation::kLeakyReLU, true}, name + ".dec0", params,
                      rng);
    dec_.emplace_back(GatedLayerSpec{4 * b, b, 4, 2, 1, 1, Activation::kLeakyReLU, true}, name + ".dec1", params, rng);
    dec_.emplace_back(GatedLayerSpec{2 * b, b, 3, 1, 1}, name + ".dec2", params, rng);
    head_ = SigmoidHead(b, name + ".head", params, rng);
  }

  Tensor forward(const Tensor& grey, const Tensor& coarse_mask, const Tensor& coarse_edge,
                 const Tensor& global_mask) const {
    const Shape& s = grey.shape();
    for (const Tensor* t : {&grey, &coarse_mask, &coarse_edge, &global_mask})
      if (t->shape() != Shape{s.n, 1, s.h, s.w}) throw ShapeError("refinement inputs must be matching 1-channel maps");
    if (s.h % 16 || s.w % 16) throw ShapeError("refinement input size must be divisible by 16, got " + s.str());
    const Tensor e0 = enc_[0].forward(concat_channels({grey, coarse_mask, coarse_edge, global_mask}));
    const Tensor e1 = enc_[1].forward(e0);
    Tensor x = enc_[2].forward(e1);
    const Tensor bottleneck = x;
    for (const GatedConv& layer : dilated_) x = layer.forward(x);
    x = dec_[0].forward(concat_channels({x, bottleneck}));
    x = dec_[1].forward(concat_channels({x, e1}));
    x = dec_[2].forward(concat_channels({x, e0}));
    return head_.forward(x);
  }

  const RefineNetConfig& config() const { return cfg_; }

 private:
  RefineNetConfig cfg_;
  std::vector<GatedConv> enc_;
  std::vector<GatedConv> dilated_;
  std::vector<GatedConv> dec_;
  SigmoidHead head_;
};

struct DiscriminatorConfig {
  std::vector<int> channels = {64, 128, 256, 256, 256, 1};
  int in_ch = 4;
  int kernel = 5;
  int stride = 2;
  Real leak = Real(0.2);

  static DiscriminatorConfig with_base(int base) {
    DiscriminatorConfig cfg;
    cfg.channels = {base, 2 * base, 4 * base, 4 * base, 4 * base, 1};
    return cfg;
  }

  void validate() const {
    if (channels.size() != 6) throw ArgumentError("discriminator must stack exactly 6 convolutions");
    if (in_ch != 4) throw ArgumentError("discriminator input is a 4-channel document+mask concatenation");
  }
};

// SN-PatchGAN: six spectrally normalized stride-2 convolutions, LeakyReLU
// between them and raw scores out (one per receptive-field patch).
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorConfig& cfg, ParameterSet& params, std::mt19937_64& rng, const std::string& name)
      : cfg_(cfg), sn_(cfg.channels.size()) {
    cfg.validate();
    int in = cfg.in_ch;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      ConvParams p;
      p.weight = detail::kaiming_weight({cfg.channels[i], in, cfg.kernel, cfg.kernel}, in * cfg.kernel * cfg.kernel, rng);
      p.bias = Tensor::parameter({cfg.channels[i]});
      p.geom = {cfg.stride, cfg.kernel / 2, 1};
      params.add(name + ".conv" + std::to_string(i) + ".weight", p.weight);
      params.add(name + ".conv" + std::to_string(i) + ".bias", p.bias);
      sn_[i].init(cfg.channels[i], rng);
      layers_.push_back(p);
      in = cfg.channels[i];
    }
  }

  // `update_sn` advances the power iteration; leave it off for the generator
  // step and at inference.
  Tensor forward(const Tensor& document, const Tensor& mask, bool update_sn = false) {
    const Shape& s = document.shape();
    if (s.c != 3 || mask.shape() != Shape{s.n, 1, s.h, s.w})
      throw ShapeError("discriminator expects a 3-channel document and a matching 1-channel mask");
    Tensor x = concat_channels({document, mask});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Tensor w = spectral_normalize(layers_[i].weight, sn_[i], update_sn);
      x = conv2d(x, w, layers_[i].bias, layers_[i].geom);
      if (i + 1 < layers_.size()) x = leaky_relu(x, cfg_.leak);
    }
    return x;
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  std::vector<ConvParams>& layers() { return layers_; }
  std::vector<SpectralNormState>& sn_states() { return sn_; }
  const std::vector<SpectralNormState>& sn_states() const { return sn_; }

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvParams> layers_;
  std::vector<SpectralNormState> sn_;
};

inline Tensor discriminator_forward(const Tensor& document, const Tensor& mask, Discriminator& d) {
  return d.forward(document, mask);
}

struct ModelConfig {
  int coarse_base = 32;
  int n_res = 4;
  int refine_base = 32;
  std::vector<int> dilations = {2, 4, 8, 16};
  int disc_base = 64;
};

// Generator (coarse + refinement) and both discriminators, with the parameter
// sets the optimizers and the checkpoint format operate on.
class GdbModel {
 public:
  explicit GdbModel(const ModelConfig& cfg = {}, std::uint64_t seed = 1) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    coarse_ = CoarseNet(CoarseNetConfig::standard(cfg.coarse_base, cfg.n_res), generator_, rng);
    refine_ = RefineNet(RefineNetConfig{cfg.refine_base, cfg.dilations}, generator_, rng);
    d_coarse_ = Discriminator(DiscriminatorConfig::with_base(cfg.disc_base), disc_coarse_, rng, "d_coarse");
    d_refine_ = Discriminator(DiscriminatorConfig::with_base(cfg.disc_base), disc_refine_, rng, "d_refine");
  }
  // Parameters are shared handles, so a copy would alias the original.
  GdbModel(const GdbModel&) = delete;
  GdbModel& operator=(const GdbModel&) = delete;
  GdbModel(GdbModel&&) = default;
  GdbModel& operator=(GdbModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  CoarseNet& coarse() { return coarse_; }
  const CoarseNet& coarse() const { return coarse_; }
  RefineNet& refine() { return refine_; }
  const RefineNet& refine() const { return refine_; }
  Discriminator& d_coarse() { return d_coarse_; }
  const Discriminator& d_coarse() const { return d_coarse_; }
  Discriminator& d_refine() { return d_refine_; }
  const Discriminator& d_refine() const { return d_refine_; }
  ParameterSet& generator_params() { return generator_; }
  const ParameterSet& generator_params() const { return generator_; }
  ParameterSet& d_coarse_params() { return disc_coarse_; }
  ParameterSet& d_refine_params() { return disc_refine_; }

  ParameterSet all_params() const {
    ParameterSet all;
    all.append(generator_);
    all.append(disc_coarse_);
    all.append(disc_refine_);
    return all;
  }

 private:
  ModelConfig cfg_;
  ParameterSet generator_;
  ParameterSet disc_coarse_;
  ParameterSet disc_refine_;
  CoarseNet coarse_;
  RefineNet refine_;
  Discriminator d_coarse_;
  Discriminator d_refine_;
};

}  // namespace gdb
