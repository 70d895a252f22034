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

// Adam, spectral normalization and the finite-difference gradient checker.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gdb/tensor.hpp"

namespace gdb {

struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

// One bias-corrected Adam update over `params`, reading their gradients.
// Moment buffers are created on the first call.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.beta1 < 0 || state.beta1 >= 1 || state.beta2 < 0 || state.beta2 >= 1)
    throw ArgumentError("Adam decay rates must lie in [0, 1)");
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), Real(0));
      state.v.emplace_back(p.numel(), Real(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("Adam state tracks a different number of parameters");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (state.m[k].size() != params[k].numel() || state.v[k].size() != params[k].numel())
      throw ShapeError("Adam moment buffer " + std::to_string(k) + " does not match its parameter");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = static_cast<Real>(state.beta1 * m[i] + (1 - state.beta1) * g[i]);
      v[i] = static_cast<Real>(state.beta2 * v[i] + (1 - state.beta2) * g[i] * g[i]);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] -= static_cast<Real>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// Persistent left/right singular-vector estimates for one weight, viewed as
// an [out_ch, rest] matrix.
struct SpectralNormState {
  std::vector<Real> u;
  std::vector<Real> v;
  int n_power_iterations = 1;
  Real last_sigma = 0;

  void init(int rows, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    u.resize(rows);
    double norm = 0;
    for (Real& x : u) {
      x = static_cast<Real>(normal(rng));
      norm += static_cast<double>(x) * x;
    }
    norm = std::sqrt(norm);
    for (Real& x : u) x = static_cast<Real>(x / norm);
    v.clear();
  }
};

namespace detail {

inline double normalize_in_place(std::vector<double>& x) {
  double norm = 0;
  for (double e : x) norm += e * e;
  norm = std::sqrt(norm);
  if (norm > 1e-12)
    for (double& e : x) e /= norm;
  return norm;
}

}  // namespace detail

// Returns weight / sigma_hat with sigma_hat = u^T W v. With `update` set, runs
// the power iteration first (v <- W^T u / |W^T u|, u <- W v / |W v|) and
// stores the vectors back into `state`. The result stays differentiable with
// respect to the weight; u and v are treated as constants. A zero matrix is
// returned unchanged.
inline Tensor spectral_normalize(const Tensor& weight, SpectralNormState& state, bool update = true) {
  const int rows = weight.shape().n;
  const int cols = static_cast<int>(weight.numel() / rows);
  if (static_cast<int>(state.u.size()) != rows) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(rows) * 7919u + cols);
    state.init(rows, rng);
  }
  auto W = weight.data();
  std::vector<double> u(state.u.begin(), state.u.end()), v(cols);
  auto right = [&] {
    std::fill(v.begin(), v.end(), 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) v[c] += W[static_cast<std::size_t>(r) * cols + c] * u[r];
    return detail::normalize_in_place(v);
  };
  auto left = [&] {
    for (int r = 0; r < rows; ++r) {
      double acc = 0;
      for (int c = 0; c < cols; ++c) acc += W[static_cast<std::size_t>(r) * cols + c] * v[c];
      u[r] = acc;
    }
    return detail::normalize_in_place(u);
  };
  if (update) {
    for (int it = 0; it < std::max(1, state.n_power_iterations); ++it) {
      right();
      left();
    }
    state.u.assign(u.begin(), u.end());
    state.v.assign(v.begin(), v.end());
  } else if (static_cast<int>(state.v.size()) == cols) {
    v.assign(state.v.begin(), state.v.end());
  } else {
    right();
  }

  double sigma = 0;
  for (int r = 0; r < rows; ++r) {
    double acc = 0;
    for (int c = 0; c < cols; ++c) acc += W[static_cast<std::size_t>(r) * cols + c] * v[c];
    sigma += u[r] * acc;
  }
  state.last_sigma = static_cast<Real>(sigma);
  if (std::abs(sigma) < 1e-12) return affine(weight, Real(1), Real(0));

  std::vector<Real> out(W.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(W[i] / sigma);
  detail::Node* pw = weight.node();
  return make_result(weight.shape(), std::move(out), {weight}, [pw, u, v, sigma, rows, cols](detail::Node& self) {
    // d(W/s)/dW contracted with G: G/s - <G, W>/s^2 * u v^T
    double inner = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) inner += static_cast<double>(self.grad[i]) * pw->value[i];
    const double k = inner / (sigma * sigma);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        pw->grad[i] += static_cast<Real>(self.grad[i] / sigma - k * u[r] * v[c]);
      }
  });
}

struct GradCheckOptions {
  double h = 1e-3;
  double floor = 1e-6;
  // 0 checks every coordinate; otherwise a fixed-seed sample per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0;
  // |a - n|_2 / max(|n|_2, floor) over all checked coordinates; tolerant of
  // single-precision rounding on individual tiny components.
  double global_rel_error = 0;
  std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients of a scalar closure against central
// differences (f(x+h) - f(x-h)) / 2h for every coordinate of `inputs`.
// Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  const GradCheckOptions& opt = {}) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor out = f();
  if (out.numel() != 1) throw ArgumentError("grad_check requires a scalar-valued closure");
  out.backward();

  GradCheckResult result;
  double diff_sq = 0, ref_sq = 0;
  std::mt19937_64 rng(opt.seed);
  for (Tensor& t : inputs) {
    std::vector<Real> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_coords_per_input && coords.size() > opt.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_input);
    }
    for (std::size_t i : coords) {
      const Real saved = t[i];
      double plus, minus;
      // the stored perturbation differs from h by rounding; divide by the actual step
      const Real hi = static_cast<Real>(saved + opt.h), lo = static_cast<Real>(saved - opt.h);
      {
        NoGradGuard guard;
        t[i] = hi;
        plus = f().item();
        t[i] = lo;
        minus = f().item();
        t[i] = saved;
      }
      const double numeric = (plus - minus) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      diff_sq += (a - numeric) * (a - numeric);
      ref_sq += numeric * numeric;
      ++result.coords_checked;
    }
  }
  result.global_rel_error = std::sqrt(diff_sq) / std::max(std::sqrt(ref_sq), opt.floor);
  return result;
}

}  // namespace gdb
