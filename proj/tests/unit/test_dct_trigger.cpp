/* Copyright 2026 The licbd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>
#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "licbd/dct.hpp"
#include "licbd/errors.hpp"
#include "licbd/trigger.hpp"
#include "test_support.hpp"

using namespace licbd;

namespace {

// X[u][v] = a(u) a(v) sum_m sum_n x[m][n] cos(pi (2m+1) u / 2B) cos(pi (2n+1) v / 2B)
double brute_dct(const torch::Tensor& block, int64_t u, int64_t v) {
  const int64_t b = block.size(0);
  auto a = [b](int64_t k) { return std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(b)); };
  auto acc = block.accessor<double, 2>();
  double sum = 0.0;
  for (int64_t m = 0; m < b; ++m) {
    for (int64_t n = 0; n < b; ++n) {
      sum += acc[m][n] * std::cos(M_PI * (2.0 * m + 1.0) * u / (2.0 * b)) *
             std::cos(M_PI * (2.0 * n + 1.0) * v / (2.0 * b));
    }
  }
  return a(u) * a(v) * sum;
}

}  // namespace

TEST_SUITE("dct_trigger") {

TEST_CASE("4x4 blocks match the cosine-sum definition") {
  torch::manual_seed(0);
  const auto x = torch::rand({2, 3, 8, 12}, torch::kFloat64);
  const auto spec = block_dct(x, 4);
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t i = 0; i < 2; ++i) {
        for (int64_t j = 0; j < 3; ++j) {
          const auto block = x[b][c].slice(0, 4 * i, 4 * i + 4).slice(1, 4 * j, 4 * j + 4).contiguous();
          for (int64_t u = 0; u < 4; ++u) {
            for (int64_t v = 0; v < 4; ++v) {
              CHECK(std::abs(spec.coeffs[b][c][i][j][u][v].item<double>() -
                             brute_dct(block, u, v)) < 1e-12);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("round trip on random blocks") {
  torch::manual_seed(1);
  const auto x = torch::rand({4, 3, 32, 48});
  const auto back = block_idct(block_dct(x, 16));
  CHECK((back - x).abs().max().item<double>() < 1e-6);
}

TEST_CASE("non-multiple sizes are padded and cropped back") {
  torch::manual_seed(2);
  const auto x = torch::rand({1, 3, 20, 37}, torch::kFloat64);
  const auto spec = block_dct(x, 16);
  CHECK(spec.coeffs.size(2) == 2);
  CHECK(spec.coeffs.size(3) == 3);
  const auto back = block_idct(spec);
  CHECK(back.sizes() == x.sizes());
  CHECK((back - x).abs().max().item<double>() < 1e-12);
}

TEST_CASE("constant block has only a DC coefficient") {
  const double c = 0.37;
  const auto spec = block_dct(torch::full({1, 1, 16, 16}, c, torch::kFloat64), 16);
  const auto coeffs = spec.coeffs[0][0][0][0];
  CHECK(coeffs[0][0].item<double>() == doctest::Approx(c * 16.0).epsilon(1e-12));
  auto ac = coeffs.clone();
  ac[0][0] = 0.0;
  CHECK(ac.abs().max().item<double>() < 1e-12);
}

TEST_CASE("dct basis is orthonormal") {
  const auto d = dct_matrix(16, torch::kFloat64);
  CHECK(torch::allclose(torch::matmul(d, d.t()), torch::eye(16, torch::kFloat64), 0, 1e-12));
  CHECK_THROWS_AS(dct_matrix(0), Error);
  CHECK_THROWS_AS(block_dct(torch::rand({1, 3, 8, 8}), -1), Error);
}

TEST_CASE("zigzag of 2x2 and 3x3 blocks") {
  const auto z2 = zigzag_order(2);
  const std::vector<FreqIndex> e2{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  CHECK((z2 == e2));
  const auto z3 = zigzag_order(3);
  const std::vector<FreqIndex> e3{{0, 0}, {0, 1}, {1, 0}, {2, 0}, {1, 1},
                                  {0, 2}, {1, 2}, {2, 1}, {2, 2}};
  CHECK((z3 == e3));
}

TEST_CASE("middle band selection") {
  const std::vector<FreqIndex> one{{0, 1}};
  CHECK((middle_band(2, 1) == one));

  const auto band = middle_band(16, 64);
  CHECK(band.size() == 64);
  std::set<std::pair<int64_t, int64_t>> seen;
  for (const auto& f : band) {
    CHECK_FALSE((f.u == 0 && f.v == 0));
    seen.insert({f.u, f.v});
  }
  CHECK(seen.size() == 64);
  CHECK((middle_band(16, 64) == band));

  CHECK_THROWS_AS(middle_band(16, 0), Error);
  CHECK_THROWS_AS(middle_band(16, 256), Error);
  CHECK_NOTHROW(middle_band(16, 255));
}

TEST_CASE("topK keeps the largest magnitudes") {
  TriggerConfig tc;
  tc.block = 4;
  tc.band = 4;
  tc.top_k = 2;
  TriggerGenerator trig(tc);
  {
    torch::NoGradGuard no_grad;
    trig->g_raw().copy_(torch::tensor({{3.0, -5.0, 1.0, 2.0},
                                       {0.1, 0.2, 0.3, 0.4},
                                       {-1.0, 1.0, -1.0, 1.0}}));
  }
  const auto g = trig->general_trigger();
  CHECK(torch::equal(g[0], torch::tensor({3.0f, -5.0f, 0.0f, 0.0f})));
  CHECK(torch::equal(g[1], torch::tensor({0.0f, 0.0f, 0.3f, 0.4f})));
  CHECK(torch::equal(g[2], torch::tensor({-1.0f, 1.0f, 0.0f, 0.0f})));

  tc.top_k = 4;
  TriggerGenerator all(tc);
  CHECK(torch::equal(all->general_trigger(), all->g_raw()));
}

TEST_CASE("trigger config validation") {
  TriggerConfig tc;
  tc.top_k = 65;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc.top_k = 0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TriggerConfig{};
  tc.block = 0;
  CHECK_THROWS_AS(tc.validate(), Error);
  tc = TriggerConfig{};
  tc.band = 256;
  CHECK_THROWS_AS(tc.validate(), Error);
}

TEST_CASE("zero-initialized weight head gives softplus(0)") {
  TriggerGenerator trig;
  const auto w = trig->patch_weights(torch::rand({2, 3, 64, 48}));
  CHECK(w.sizes() == torch::IntArrayRef({2, 3, 4, 3}));
  CHECK(torch::allclose(w, torch::full_like(w, std::log(2.0)), 0, 1e-6));
}

TEST_CASE("zero trigger or zero weights leave the image unchanged") {
  torch::manual_seed(3);
  const auto x = torch::rand({1, 3, 32, 32}, torch::kFloat64);
  TriggerGenerator trig;
  trig->to(torch::kFloat64);
  {
    torch::NoGradGuard no_grad;
    trig->g_raw().zero_();
  }
  CHECK((trig->inject(x).x_p - x).abs().max().item<double>() < 1e-12);

  TriggerGenerator other;
  other->to(torch::kFloat64);
  const auto spectrum = other->trigger_spectrum(torch::zeros({1, 3, 2, 2}, torch::kFloat64));
  CHECK(spectrum.abs().max().item<double>() == 0.0);
}

TEST_CASE("the trigger only touches the selected band") {
  torch::manual_seed(4);
  TriggerGenerator trig;
  trig->to(torch::kFloat64);
  const auto x = torch::rand({1, 3, 32, 32}, torch::kFloat64);
  const auto delta = block_dct(trig->inject(x).x_p, 16).coeffs - block_dct(x, 16).coeffs;
  const auto mask = trig->topk_mask();
  std::set<std::pair<int64_t, int64_t>> active[3];
  const auto& band = trig->band_indices();
  for (int64_t c = 0; c < 3; ++c) {
    for (size_t k = 0; k < band.size(); ++k) {
      if (mask[c][static_cast<int64_t>(k)].item<double>() > 0) active[c].insert({band[k].u, band[k].v});
    }
    CHECK(active[c].size() == 16);
    for (int64_t u = 0; u < 16; ++u) {
      for (int64_t v = 0; v < 16; ++v) {
        const double m = delta[0][c].select(2, u).select(2, v).abs().max().item<double>();
        if (active[c].count({u, v}) == 0) {
          CHECK(m < 1e-12);
        } else {
          CHECK(m > 0.0);
        }
      }
    }
  }
}

TEST_CASE("injected coefficient equals g times w") {
  torch::manual_seed(5);
  TriggerConfig tc;
  tc.use_topk = false;
  TriggerGenerator trig(tc);
  trig->to(torch::kFloat64);
  const auto x = torch::rand({1, 3, 16, 16}, torch::kFloat64);
  const auto w = trig->patch_weights(x);
  const auto delta = block_dct(trig->inject(x).x_p, 16).coeffs - block_dct(x, 16).coeffs;
  const auto& band = trig->band_indices();
  for (int64_t c = 0; c < 3; ++c) {
    for (size_t k = 0; k < band.size(); k += 9) {
      const double expect = trig->g_raw()[c][static_cast<int64_t>(k)].item<double>() *
                            w[0][c][0][0].item<double>();
      CHECK(delta[0][c][0][0][band[k].u][band[k].v].item<double>() ==
            doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("amplification scales the residual and the budget") {
  torch::manual_seed(6);
  TriggerGenerator trig;
  const auto x = 0.25 + 0.5 * torch::rand({2, 3, 32, 32});
  const auto plain = trig->inject(x, ClipMode::kClip);
  const auto same = amplify(x, trig, 1.0);
  CHECK(torch::equal(same.poisoned.x_p, plain.x_p));
  const auto three = amplify(x, trig, 3.0);
  CHECK(three.budget == doctest::Approx(2.25e-4).epsilon(1e-12));
  CHECK(three.unclipped_mse == doctest::Approx(9.0 * trig->inject(x).measured_mse).epsilon(1e-4));
  CHECK_THROWS_AS(amplify(x, trig, 0.5), Error);
}

TEST_CASE("baseline injector spends exactly the budget") {
  torch::manual_seed(7);
  BaselineTrigger base(0.005);
  base->to(torch::kFloat64);
  const auto x = torch::rand({3, 3, 32, 32}, torch::kFloat64);
  const auto p = base->inject(x);
  for (int64_t i = 0; i < 3; ++i) {
    const double mse = torch::mean(torch::square(p.x_p[i] - x[i])).item<double>();
    CHECK(std::abs(mse - 2.5e-5) < 1e-9);
  }
  base->set_epsilon(0.0);
  CHECK(torch::equal(base->inject(x).x_p, x));
}

TEST_CASE("trigger gradients match central differences") {
  torch::manual_seed(9);
  TriggerGenerator trig;
  trig->to(torch::kFloat64);
  {
    torch::NoGradGuard no_grad;
    trig->weight_head()->weight.normal_(0.0, 0.1);
  }
  const auto x = torch::rand({2, 3, 32, 32}, torch::kFloat64);
  const auto target = torch::rand({2, 3, 32, 32}, torch::kFloat64);
  auto loss = [&] { return torch::sum(torch::square(trig->inject(x).x_p - target)); };
  for (auto& item : trig->named_parameters()) {
    CAPTURE(item.key());
    const auto check = testing::check_gradient(loss, item.value());
    CHECK(check.worst_relative < 1e-3);
  }
}

TEST_CASE("unselected general-trigger entries receive no gradient") {
  torch::manual_seed(10);
  TriggerGenerator trig;
  const auto x = torch::rand({1, 3, 32, 32});
  torch::sum(trig->inject(x).x_p).backward();
  const auto mask = trig->topk_mask();
  const auto grad = trig->g_raw().grad();
  CHECK((grad * (1 - mask)).abs().max().item<double>() == 0.0);
  CHECK((grad * mask).abs().max().item<double>() > 0.0);
}

}
