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


#include <catch_amalgamated.hpp>

#include <random>

#include "harmof0/gradcheck.hpp"
#include "harmof0/kernels.hpp"
#include "harmof0/nn.hpp"
#include "harmof0/parallel.hpp"
#include "harmof0/tensor.hpp"

using namespace harmof0;
using Catch::Approx;

namespace {

template <class T>
Tensor4<T> random_tensor(Shape4 s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor4<T> x(s);
  for (auto& v : x.data()) v = static_cast<T>(u(rng));
  return x;
}

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(u(rng));
  return v;
}

// Direct zero-padded "same" convolution.
Tensor4<double> naive_conv(const Tensor4<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                           const Conv2dShape& k) {
  Tensor4<double> y(x.batch(), k.c_out, x.freq(), x.time());
  const long pf = static_cast<long>(k.k_f / 2), pt = static_cast<long>(k.k_t / 2);
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t o = 0; o < k.c_out; ++o)
      for (std::size_t f = 0; f < x.freq(); ++f)
        for (std::size_t t = 0; t < x.time(); ++t) {
          double s = b[o];
          for (std::size_t i = 0; i < k.c_in; ++i)
            for (std::size_t a = 0; a < k.k_f; ++a)
              for (std::size_t c = 0; c < k.k_t; ++c) {
                const long ff = static_cast<long>(f) + static_cast<long>(a) - pf;
                const long tt = static_cast<long>(t) + static_cast<long>(c) - pt;
                if (ff < 0 || tt < 0 || ff >= static_cast<long>(x.freq()) || tt >= static_cast<long>(x.time())) continue;
                s += w[((o * k.c_in + i) * k.k_f + a) * k.k_t + c] *
                     x(n, i, static_cast<std::size_t>(ff), static_cast<std::size_t>(tt));
              }
          y(n, o, f, t) = s;
        }
  return y;
}

}  // namespace

TEST_CASE("tensor indexing and shapes") {
  Tensor4<float> x(2, 3, 4, 5);
  CHECK(x.size() == 120);
  x(1, 2, 3, 4) = 7.0f;
  CHECK(x.data()[119] == 7.0f);
  CHECK(x.plane(1, 2)[19] == 7.0f);
  CHECK(x.all_finite());
  x(0, 0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(x.all_finite());
  CHECK_THROWS_AS(require_shape(Shape4{1, 2, 3, 4}, Shape4{1, 2, 3, 5}, "test"), ValidationError);
  const auto d = x.cast<double>();
  CHECK(d(1, 2, 3, 4) == 7.0);
}

TEST_CASE("mix_accumulate matches a triple loop") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n_out = 1 + rng() % 9, n_in = 1 + rng() % 9, len = 1 + rng() % 700;
    const auto in = random_vec<float>(n_in * len, rng);
    const auto w = random_vec<float>(n_out * n_in, rng);
    auto out = random_vec<float>(n_out * len, rng);
    auto ref = out;
    kernels::mix_accumulate(out.data(), len, n_out, in.data(), len, n_in, w.data(), n_in, std::size_t{1}, len);
    for (std::size_t o = 0; o < n_out; ++o)
      for (std::size_t p = 0; p < len; ++p) {
        double s = ref[o * len + p];
        for (std::size_t i = 0; i < n_in; ++i) s += double(w[o * n_in + i]) * in[i * len + p];
        REQUIRE(out[o * len + p] == Approx(s).margin(1e-5));
      }
  }
}

TEST_CASE("mix_dot matches a triple loop") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n_a = 1 + rng() % 9, n_b = 1 + rng() % 9, len = 1 + rng() % 3000;
    const auto a = random_vec<double>(n_a * len, rng);
    const auto b = random_vec<double>(n_b * len, rng);
    std::vector<double> g(n_a * n_b, 0.5);
    kernels::mix_dot(g.data(), n_b, std::size_t{1}, a.data(), len, n_a, b.data(), len, n_b, len);
    for (std::size_t o = 0; o < n_a; ++o)
      for (std::size_t i = 0; i < n_b; ++i) {
        double s = 0.5;
        for (std::size_t p = 0; p < len; ++p) s += a[o * len + p] * b[i * len + p];
        REQUIRE(g[o * n_b + i] == Approx(s).epsilon(1e-12).margin(1e-10));
      }
  }
}

TEST_CASE("conv2d forward equals direct convolution") {
  std::mt19937_64 rng(3);
  for (std::size_t k : {1u, 3u, 5u}) {
    const Conv2dShape s{4, 3, k, k};
    const auto x = random_tensor<double>({2, 3, 9, 7}, rng);
    const auto w = random_vec<double>(s.weight_count(), rng);
    const auto b = random_vec<double>(4, rng);
    const auto y = conv2d_forward<double>(x, w, b, s);
    const auto r = naive_conv(x, w, b, s);
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y.data()[i] == Approx(r.data()[i]).margin(1e-12));
  }
  const Conv2dShape rect{2, 1, 3, 1};
  const auto x = random_tensor<double>({1, 1, 6, 4}, rng);
  const auto w = random_vec<double>(rect.weight_count(), rng);
  const std::vector<double> b(2, 0.0);
  const auto y = conv2d_forward<double>(x, w, b, rect);
  const auto r = naive_conv(x, w, b, rect);
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(y.data()[i] == Approx(r.data()[i]).margin(1e-12));
}

TEST_CASE("conv2d rejects bad shapes") {
  const Conv2dShape s{2, 3, 3, 3};
  Tensor4<float> x(1, 2, 5, 5);
  std::vector<float> w(s.weight_count()), b(2);
  CHECK_THROWS_AS(conv2d_forward<float>(x, w, b, s), ValidationError);
  const Conv2dShape even{2, 2, 2, 2};
  std::vector<float> we(even.weight_count());
  CHECK_THROWS_AS(conv2d_forward<float>(x, we, b, even), ValidationError);
}

TEST_CASE("conv2d preserves frequency and time extents") {
  Conv2d<float> c(Conv2dShape{4, 1, 3, 3});
  for (std::size_t t : {1u, 2u, 50u, 100u}) CHECK(c.forward(Tensor4<float>(1, 1, 352, t)).shape() == Shape4{1, 4, 352, t});
}

TEST_CASE("conv2d backward equals the adjoint of forward") {
  // <dy, conv(x)> is bilinear; compare gradients against a direct sum
  std::mt19937_64 rng(4);
  const Conv2dShape s{3, 2, 3, 3};
  const auto x = random_tensor<double>({2, 2, 6, 5}, rng);
  const auto w = random_vec<double>(s.weight_count(), rng);
  const auto g = random_tensor<double>({2, 3, 6, 5}, rng);
  std::vector<double> gw(w.size(), 0.0), gb(3, 0.0);
  const auto gx = conv2d_backward<double>(x, w, s, g, gw, gb, true);
  // dL/dw[j] = <g, conv(x; e_j)>, the bias-free response to a unit weight
  const std::vector<double> zb(3, 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    std::vector<double> e(w.size(), 0.0);
    e[j] = 1.0;
    const auto y = naive_conv(x, e, zb, s);
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) d += y.data()[i] * g.data()[i];
    REQUIRE(gw[j] == Approx(d).margin(1e-10));
  }
  for (std::size_t o = 0; o < 3; ++o) {
    double d = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 30; ++p) d += g.plane(n, o)[p];
    CHECK(gb[o] == Approx(d));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    Tensor4<double> e(x.shape());
    e.data()[j] = 1.0;
    const auto y = naive_conv(e, w, zb, s);
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) d += y.data()[i] * g.data()[i];
    REQUIRE(gx.data()[j] == Approx(d).margin(1e-10));
  }
}

TEST_CASE("activations") {
  Tensor4<double> x(1, 1, 1, 4);
  x.data()[0] = -2;
  x.data()[1] = 0;
  x.data()[2] = 3;
  x.data()[3] = -1000;
  const auto r = relu_forward(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[2] == 3.0);
  const auto s = sigmoid_forward(x);
  CHECK(s.data()[1] == 0.5);
  CHECK(s.data()[2] == Approx(1.0 / (1.0 + std::exp(-3.0))));
  CHECK(std::isfinite(s.data()[3]));
  CHECK(s.data()[3] >= 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-30.0f) > 0.0f);
}

TEST_CASE("batch norm normalizes per channel in training mode") {
  std::mt19937_64 rng(5);
  BatchNorm<double> bn(3);
  auto x = random_tensor<double>({4, 3, 5, 6}, rng);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t p = 0; p < 30; ++p) x.plane(n, 1)[p] = 10.0 + 3.0 * x.plane(n, 1)[p];
  const auto y = bn.forward_train(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0, mx = 0, vx = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < 30; ++p) {
        m += y.plane(n, c)[p];
        mx += x.plane(n, c)[p];
      }
    m /= 120;
    mx /= 120;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t p = 0; p < 30; ++p) {
        v += (y.plane(n, c)[p] - m) * (y.plane(n, c)[p] - m);
        vx += (x.plane(n, c)[p] - mx) * (x.plane(n, c)[p] - mx);
      }
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 120 == Approx(vx / 120 / (vx / 120 + 1e-5)));
    // running stats: momentum 0.1 from (0, 1), unbiased variance
    CHECK(bn.running_mean()[c] == Approx(0.1 * mx));
    CHECK(bn.running_var()[c] == Approx(0.9 + 0.1 * vx / 119));
  }
}

TEST_CASE("batch norm eval uses initial stats before training") {
  BatchNorm<float> bn(2);
  Tensor4<float> x(1, 2, 2, 2);
  for (std::size_t i = 0; i < 8; ++i) x.data()[i] = static_cast<float>(i);
  const auto y = bn.forward_eval(x);
  for (std::size_t i = 0; i < 8; ++i) CHECK(y.data()[i] == Approx(i / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("layer gradients pass finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CHECK(gradcheck_conv2d(seed, 3).passed);
    CHECK(gradcheck_conv2d(seed, 1).passed);
    CHECK(gradcheck_batchnorm(seed).passed);
    CHECK(gradcheck_relu(seed).passed);
    CHECK(gradcheck_sigmoid(seed).passed);
  }
}

TEST_CASE("gradcheck detects a wrong gradient") {
  // sanity of the harness itself: a corrupted backward must fail
  std::mt19937_64 rng(9);
  Conv2d<double> l(Conv2dShape{2, 2, 3, 3});
  detail::randomize(l, rng);
  auto p = detail::layer_probe(l);
  auto good = p.backward;
  p.backward = [&](const Tensor4<double>& x, const Tensor4<double>& g) {
    auto gx = good(x, g);
    l.weight().grad[0] *= 1.01;
    return gx;
  };
  const auto r = detail::run_probe("broken", 0, p, detail::random_input({1, 2, 5, 4}, rng), rng, GradcheckOptions{});
  CHECK_FALSE(r.passed);
}

TEST_CASE("kernels are independent of the worker count") {
  std::mt19937_64 rng(6);
  const Conv2dShape s{16, 8, 3, 3};
  const auto x = random_tensor<float>({2, 8, 64, 50}, rng);
  const auto w = random_vec<float>(s.weight_count(), rng);
  const auto b = random_vec<float>(16, rng);
  const auto g = random_tensor<float>({2, 16, 64, 50}, rng);
  const int saved = worker_count();
  auto run = [&](int threads) {
    set_worker_count(threads);
    std::vector<float> gw(w.size(), 0.0f), gb(16, 0.0f);
    auto y = conv2d_forward<float>(x, w, b, s);
    auto gx = conv2d_backward<float>(x, w, s, g, gw, gb, true);
    return std::make_tuple(std::vector<float>(y.data().begin(), y.data().end()),
                           std::vector<float>(gx.data().begin(), gx.data().end()), gw);
  };
  const auto one = run(1);
  const auto four = run(4);
  set_worker_count(saved);
  CHECK(std::get<0>(one) == std::get<0>(four));
  CHECK(std::get<1>(one) == std::get<1>(four));
  CHECK(std::get<2>(one) == std::get<2>(four));
}
