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

// Training objective: dice, binary cross-entropy and L1 over the four
// supervised outputs, hinge adversarial terms, and their weighted sum.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gdb/tensor.hpp"

namespace gdb {

struct LossWeights {
  double lambda_d = 1;
  double lambda_b = 1;
  double lambda_l1 = 10;
  double lambda_a = 0.1;
  // per supervised output: coarse mask, coarse edge, full-document coarse mask, refined mask
  std::array<double, 4> lambda_i = {1, 1, 1, 2};
  // Detach flipped (pure-background) dice terms instead of differentiating them.
  bool stop_gradient_on_flip = false;

  void validate() const {
    for (double w : {lambda_d, lambda_b, lambda_l1, lambda_a})
      if (!(w >= 0)) throw ArgumentError("loss weights must be non-negative");
    for (double w : lambda_i)
      if (!(w >= 0)) throw ArgumentError("per-output loss weights must be non-negative");
  }
};

// Outputs (O_m_C, O_e_C, O_fm_C, O_m_R) paired with targets (T_m, T_e, T_f, T_m).
struct SupervisionPack {
  std::array<Tensor, 4> outputs;
  std::array<Tensor, 4> targets;

  void validate() const {
    for (std::size_t i = 0; i < 4; ++i) {
      if (!outputs[i].defined() || !targets[i].defined())
        throw ArgumentError("supervision term " + std::to_string(i) + " is missing");
      if (!(outputs[i].shape() == targets[i].shape()))
        throw ShapeError("supervision term " + std::to_string(i) + ": " + outputs[i].shape().str() + " vs " +
                         targets[i].shape().str());
    }
  }
};

inline constexpr double kBceEpsilon = 1e-7;

// 1 - 2 sum(OT) / (sum(O^2) + sum(T^2)), per batch item, averaged over the
// batch. An item whose target has no text is scored on the complements 1-O,
// 1-T, so an all-background patch predicted as background costs ~0.
inline Tensor dice_term(const Tensor& out, const Tensor& target, bool stop_gradient_on_flip = false) {
  detail::require_same(out, target, "dice");
  const Shape s = out.shape();
  const std::size_t per = s.size() / s.n;
  std::vector<double> dLdO(out.numel(), 0.0);
  double total = 0;
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = n * per;
    bool flip = true;
    for (std::size_t j = 0; j < per && flip; ++j) flip = target[base + j] == 0;
    double a = 0, b = 0;
    for (std::size_t j = 0; j < per; ++j) {
      const double o = flip ? 1 - out[base + j] : out[base + j];
      const double t = flip ? 1 - target[base + j] : target[base + j];
      a += o * t;
      b += o * o + t * t;
    }
    if (b <= 0) continue;  // both maps empty: perfect agreement
    total += 1 - 2 * a / b;
    if (flip && stop_gradient_on_flip) continue;
    const double sign = flip ? -1 : 1;
    for (std::size_t j = 0; j < per; ++j) {
      const double o = flip ? 1 - out[base + j] : out[base + j];
      const double t = flip ? 1 - target[base + j] : target[base + j];
      dLdO[base + j] = sign * -2 * (t * b - a * 2 * o) / (b * b) / s.n;
    }
  }
  detail::Node* po = out.node();
  return make_result({1, 1, 1, 1}, {static_cast<Real>(total / s.n)}, {out},
                     [po, dLdO = std::move(dLdO)](detail::Node& self) {
                       if (!po->requires_grad) return;
                       for (std::size_t i = 0; i < dLdO.size(); ++i)
                         po->grad[i] += static_cast<Real>(self.grad[0] * dLdO[i]);
                     });
}

// -mean(T log O + (1-T) log(1-O)) with O clamped to [eps, 1-eps]; the clamp
// passes no gradient.
inline Tensor bce_term(const Tensor& out, const Tensor& target) {
  detail::require_same(out, target, "bce");
  const double n = static_cast<double>(out.numel());
  double total = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double o = std::clamp<double>(out[i], kBceEpsilon, 1 - kBceEpsilon), t = target[i];
    total -= t * std::log(o) + (1 - t) * std::log(1 - o);
  }
  detail::Node *po = out.node(), *pt = target.node();
  return make_result({1, 1, 1, 1}, {static_cast<Real>(total / n)}, {out}, [po, pt, n](detail::Node& self) {
    if (!po->requires_grad) return;
    for (std::size_t i = 0; i < po->value.size(); ++i) {
      const double o = po->value[i], t = pt->value[i];
      if (o <= kBceEpsilon || o >= 1 - kBceEpsilon) continue;
      po->grad[i] += static_cast<Real>(self.grad[0] * -(t / o - (1 - t) / (1 - o)) / n);
    }
  });
}

// mean |O - T|.
inline Tensor l1_term(const Tensor& out, const Tensor& target) {
  detail::require_same(out, target, "l1");
  const double n = static_cast<double>(out.numel());
  double total = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) total += std::abs(static_cast<double>(out[i]) - target[i]);
  detail::Node *po = out.node(), *pt = target.node();
  return make_result({1, 1, 1, 1}, {static_cast<Real>(total / n)}, {out}, [po, pt, n](detail::Node& self) {
    if (!po->requires_grad) return;
    for (std::size_t i = 0; i < po->value.size(); ++i) {
      const Real d = po->value[i] - pt->value[i];
      if (d != 0) po->grad[i] += static_cast<Real>(self.grad[0] * (d > 0 ? 1 : -1) / n);
    }
  });
}

namespace detail {

template <class Term>
Tensor weighted_terms(const SupervisionPack& pack, const LossWeights& w, Term term) {
  pack.validate();
  std::vector<Tensor> terms;
  std::vector<Real> weights;
  for (std::size_t i = 0; i < 4; ++i) {
    terms.push_back(term(pack.outputs[i], pack.targets[i]));
    weights.push_back(static_cast<Real>(w.lambda_i[i]));
  }
  return weighted_sum(terms, weights);
}

}  // namespace detail

inline Tensor dice_loss(const SupervisionPack& pack, const LossWeights& w = {}) {
  return detail::weighted_terms(
      pack, w, [&](const Tensor& o, const Tensor& t) { return dice_term(o, t, w.stop_gradient_on_flip); });
}

inline Tensor bce_loss(const SupervisionPack& pack, const LossWeights& w = {}) {
  return detail::weighted_terms(pack, w, bce_term);
}

inline Tensor l1_loss(const SupervisionPack& pack, const LossWeights& w = {}) {
  return detail::weighted_terms(pack, w, l1_term);
}

// -mean(scores)
inline Tensor hinge_g(const Tensor& scores) { return affine(mean(scores), Real(-1), Real(0)); }

// mean(relu(1 - real)) + mean(relu(1 + fake))
inline Tensor hinge_d(const Tensor& real, const Tensor& fake) {
  return add(mean(relu(affine(real, Real(-1), Real(1)))), mean(relu(affine(fake, Real(1), Real(1)))));
}

// Discriminator scores for the local coarse output, the full-document coarse
// output and the refined output, each with its ground-truth counterpart.
struct ScorePair {
  Tensor real;
  Tensor fake;
};

struct AdversarialScores {
  ScorePair local;
  ScorePair global;
  ScorePair refined;
};

struct AdversarialLosses {
  Tensor gen_coarse;  // hinge_g(local) + hinge_g(global)
  Tensor gen_refine;  // hinge_g(refined)
  Tensor adv;         // gen_coarse + 2 gen_refine
  Tensor d_coarse;    // hinge_d(local) + hinge_d(global)
  Tensor d_refine;    // hinge_d(refined)
};

inline Tensor generator_adversarial(const Tensor& local_fake, const Tensor& global_fake, const Tensor& refined_fake,
                                    Tensor* gen_coarse = nullptr, Tensor* gen_refine = nullptr) {
  if (!local_fake.defined() || !global_fake.defined() || !refined_fake.defined())
    throw ArgumentError("adversarial loss needs local, global and refined score maps");
  const Tensor gc = add(hinge_g(local_fake), hinge_g(global_fake));
  const Tensor gr = hinge_g(refined_fake);
  if (gen_coarse) *gen_coarse = gc;
  if (gen_refine) *gen_refine = gr;
  return weighted_sum({gc, gr}, {Real(1), Real(2)});
}

inline AdversarialLosses adversarial_composition(const AdversarialScores& s) {
  for (const ScorePair* p : {&s.local, &s.global, &s.refined})
    if (!p->real.defined() || !p->fake.defined()) throw ArgumentError("adversarial composition is missing a score map");
  AdversarialLosses out;
  out.adv = generator_adversarial(s.local.fake, s.global.fake, s.refined.fake, &out.gen_coarse, &out.gen_refine);
  out.d_coarse = add(hinge_d(s.local.real, s.local.fake), hinge_d(s.global.real, s.global.fake));
  out.d_refine = hinge_d(s.refined.real, s.refined.fake);
  return out;
}

struct GeneratorLoss {
  Tensor dice;
  Tensor bce;
  Tensor l1;
  Tensor adv;
  Tensor total;
};

inline Tensor total_generator_loss(const Tensor& dice, const Tensor& bce, const Tensor& l1, const Tensor& adv,
                                   const LossWeights& w = {}) {
  w.validate();
  return weighted_sum({dice, bce, l1, adv}, {static_cast<Real>(w.lambda_d), static_cast<Real>(w.lambda_b),
                                             static_cast<Real>(w.lambda_l1), static_cast<Real>(w.lambda_a)});
}

inline GeneratorLoss total_generator_loss(const SupervisionPack& pack, const LossWeights& w, const Tensor& adv) {
  GeneratorLoss g;
  g.dice = dice_loss(pack, w);
  g.bce = bce_loss(pack, w);
  g.l1 = l1_loss(pack, w);
  g.adv = adv;
  g.total = total_generator_loss(g.dice, g.bce, g.l1, adv, w);
  return g;
}

}  // namespace gdb
