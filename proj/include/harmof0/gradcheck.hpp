/*
 * Copyright 2026 The HarmoF0 Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Central-difference checks of every backward pass, in double precision.
// Each check uses the scalar L = sum(r * f(x)) with a random probe r, so
// dL/d(out) = r and the analytic gradients come from one backward call.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "harmof0/harmonic_dilation.hpp"
#include "harmof0/model.hpp"
#include "harmof0/nn.hpp"
#include "harmof0/training.hpp"

namespace harmof0 {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Gradients smaller than this are compared in absolute terms.
  double floor = 1e-3;
};

struct GradcheckResult {
  std::string layer;
  std::uint64_t seed = 0;
  std::size_t n_checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

namespace detail {

using TensorD = Tensor4<double>;

inline void fill_uniform(std::span<double> v, std::mt19937_64& rng, double lo, double hi) {
  for (double& x : v) x = lo + (hi - lo) * unit_uniform(rng);
}

/// Uniform in [-hi, -gap] U [gap, hi]: keeps ReLU inputs away from the kink.
inline void fill_away_from_zero(std::span<double> v, std::mt19937_64& rng, double gap, double hi) {
  for (double& x : v) {
    const double m = gap + (hi - gap) * unit_uniform(rng);
    x = unit_uniform(rng) < 0.5 ? -m : m;
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Probe {
  std::function<TensorD(const TensorD&)> forward;
  /// Called with (x, dL/dout); fills parameter gradients, returns dL/dx.
  std::function<TensorD(const TensorD&, const TensorD&)> backward;
  std::vector<std::vector<double>*> values;
  std::vector<std::vector<double>*> grads;
};

inline double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline GradcheckResult run_probe(const std::string& name, std::uint64_t seed, Probe& p, TensorD x,
                                 std::mt19937_64& rng, const GradcheckOptions& opt) {
  GradcheckResult res{name, seed, 0, 0.0, false};
  const TensorD y0 = p.forward(x);
  TensorD r(y0.shape());
  fill_uniform(r.data(), rng, -1.0, 1.0);
  auto loss = [&](const TensorD& in) { return dot(p.forward(in).data(), r.data()); };

  for (auto* g : p.grads) std::fill(g->begin(), g->end(), 0.0);
  p.forward(x);  // refresh any cached state before backward
  const TensorD gx = p.backward(x, r);

  auto check = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + opt.step;
    const double up = loss(x);
    slot = keep - opt.step;
    const double down = loss(x);
    slot = keep;
    const double numeric = (up - down) / (2.0 * opt.step);
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, numeric, opt.floor));
    ++res.n_checked;
  };
  auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) check(xs[i], gx.data()[i]);
  for (std::size_t k = 0; k < p.values.size(); ++k)
    for (std::size_t i = 0; i < p.values[k]->size(); ++i) check((*p.values[k])[i], (*p.grads[k])[i]);
  res.passed = res.max_rel_error < opt.tolerance;
  return res;
}

template <class Layer>
Probe layer_probe(Layer& l) {
  Probe p;
  p.forward = [&l](const TensorD& x) { return l.forward(x); };
  p.backward = [&l](const TensorD& x, const TensorD& g) { return l.backward(x, g, true); };
  p.values = {&l.weight().value, &l.bias().value};
  p.grads = {&l.weight().grad, &l.bias().grad};
  return p;
}

template <class Layer>
void randomize(Layer& l, std::mt19937_64& rng) {
  fill_uniform(l.weight().value, rng, -0.5, 0.5);
  fill_uniform(l.bias().value, rng, -0.5, 0.5);
}

inline TensorD random_input(const Shape4& s, std::mt19937_64& rng) {
  TensorD x(s);
  fill_uniform(x.data(), rng, -1.0, 1.0);
  return x;
}

}  // namespace detail

inline GradcheckResult gradcheck_conv2d(std::uint64_t seed, std::size_t k = 3, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  Conv2d<double> l(Conv2dShape{3, 2, k, k});
  detail::randomize(l, rng);
  auto p = detail::layer_probe(l);
  return detail::run_probe("conv2d_" + std::to_string(k) + "x" + std::to_string(k), seed, p,
                           detail::random_input({2, 2, 7, 5}, rng), rng, opt);
}

/// Multi-rate layer on the full default schedule (offsets up to 172 bins).
inline GradcheckResult gradcheck_mrdc(std::uint64_t seed, bool anchor = true, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  const auto sched = compute_dilation_schedule(48, 12);
  DilatedConv<double> l(DilatedConvSpec::multi_rate(2, 2, sched, anchor));
  detail::randomize(l, rng);
  auto p = detail::layer_probe(l);
  return detail::run_probe(anchor ? "mrdc" : "mrdc_no_anchor", seed, p, detail::random_input({2, 2, 180, 2}, rng), rng,
                           opt);
}

inline GradcheckResult gradcheck_fixed_rate(std::uint64_t seed, bool causal, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  DilatedConv<double> l(DilatedConvSpec::fixed_rate(3, 2, 4, causal ? 4 : 3, causal));
  detail::randomize(l, rng);
  auto p = detail::layer_probe(l);
  return detail::run_probe(causal ? "frdc" : "sd", seed, p, detail::random_input({2, 2, 20, 3}, rng), rng, opt);
}

inline GradcheckResult gradcheck_batchnorm(std::uint64_t seed, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  BatchNorm<double> l(3);
  detail::fill_uniform(l.gamma().value, rng, 0.5, 1.5);
  detail::fill_uniform(l.beta().value, rng, -0.5, 0.5);
  detail::Probe p;
  p.forward = [&l](const detail::TensorD& x) { return l.forward_train(x); };
  p.backward = [&l](const detail::TensorD& x, const detail::TensorD& g) { return l.backward(x, g); };
  p.values = {&l.gamma().value, &l.beta().value};
  p.grads = {&l.gamma().grad, &l.beta().grad};
  return detail::run_probe("batchnorm", seed, p, detail::random_input({2, 3, 4, 3}, rng), rng, opt);
}

inline GradcheckResult gradcheck_relu(std::uint64_t seed, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  detail::Probe p;
  p.forward = [](const detail::TensorD& x) { return relu_forward(x); };
  p.backward = [](const detail::TensorD& x, const detail::TensorD& g) { return relu_backward(relu_forward(x), g); };
  detail::TensorD x(Shape4{2, 2, 5, 4});
  detail::fill_away_from_zero(x.data(), rng, 0.05, 1.0);
  return detail::run_probe("relu", seed, p, x, rng, opt);
}

inline GradcheckResult gradcheck_sigmoid(std::uint64_t seed, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  detail::Probe p;
  p.forward = [](const detail::TensorD& x) { return sigmoid_forward(x); };
  p.backward = [](const detail::TensorD& x, const detail::TensorD& g) { return sigmoid_backward(sigmoid_forward(x), g); };
  detail::TensorD x(Shape4{2, 1, 5, 4});
  detail::fill_uniform(x.data(), rng, -4.0, 4.0);
  return detail::run_probe("sigmoid", seed, p, x, rng, opt);
}

/// Weighted BCE composed with the sigmoid head, differentiated w.r.t. logits.
inline GradcheckResult gradcheck_loss_through_sigmoid(std::uint64_t seed, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(detail::splitmix64(seed));
  const std::size_t B = 2, F = 12, Tn = 5;
  std::vector<TargetMap> targets(B);
  for (auto& t : targets) {
    t.n_bins = F;
    t.bins.resize(Tn);
    for (auto& b : t.bins) b = static_cast<int>(rng() % (F + 1)) - 1;  // -1 = unvoiced
  }
  detail::TensorD z(Shape4{B, 1, F, Tn});
  detail::fill_uniform(z.data(), rng, -3.0, 3.0);
  const double w = 20.0;
  auto loss = [&](const detail::TensorD& in) {
    return weighted_bce_loss(sigmoid_forward(in), std::span<const TargetMap>(targets), w);
  };
  detail::TensorD gp;
  const auto y = sigmoid_forward(z);
  weighted_bce_loss(y, std::span<const TargetMap>(targets), w, &gp);
  const auto gz = sigmoid_backward(y, gp);

  GradcheckResult res{"bce_through_sigmoid", seed, 0, 0.0, false};
  auto zs = z.data();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double keep = zs[i];
    zs[i] = keep + opt.step;
    const double up = loss(z);
    zs[i] = keep - opt.step;
    const double down = loss(z);
    zs[i] = keep;
    const double numeric = (up - down) / (2.0 * opt.step);
    res.max_rel_error = std::max(res.max_rel_error, detail::rel_error(gz.data()[i], numeric, opt.floor));
    ++res.n_checked;
  }
  res.passed = res.max_rel_error < opt.tolerance;
  return res;
}

/// Every check for `n_seeds` consecutive seeds starting at `base_seed`.
inline std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t base_seed = 0, int n_seeds = 10,
                                                        const GradcheckOptions& opt = {}) {
  std::vector<GradcheckResult> out;
  for (int i = 0; i < n_seeds; ++i) {
    const std::uint64_t s = base_seed + static_cast<std::uint64_t>(i);
    out.push_back(gradcheck_conv2d(s, 3, opt));
    out.push_back(gradcheck_conv2d(s, 1, opt));
    out.push_back(gradcheck_mrdc(s, true, opt));
    out.push_back(gradcheck_mrdc(s, false, opt));
    out.push_back(gradcheck_fixed_rate(s, true, opt));
    out.push_back(gradcheck_fixed_rate(s, false, opt));
    out.push_back(gradcheck_batchnorm(s, opt));
    out.push_back(gradcheck_relu(s, opt));
    out.push_back(gradcheck_sigmoid(s, opt));
    out.push_back(gradcheck_loss_through_sigmoid(s, opt));
  }
  return out;
}

}  // namespace harmof0
