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

#include <cmath>

#include "licbd/codec.hpp"
#include "licbd/errors.hpp"
#include "licbd/evaluation.hpp"
#include "licbd/gdn.hpp"
#include "test_support.hpp"

using namespace licbd;

namespace {

CodecConfig tiny_config() {
  CodecConfig c;
  c.hidden_channels = 8;
  c.latent_channels = 8;
  c.hyper_channels = 4;
  return c;
}

double phi(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

}  // namespace

TEST_SUITE("codec") {

TEST_CASE("quantize rounds half away from zero") {
  auto q = quantize(torch::tensor({0.6, -1.5, 1.5, -0.4, 2.5}, torch::kFloat64),
                    QuantMode::kEvalRound);
  CHECK(q[0].item<double>() == 1.0);
  CHECK(q[1].item<double>() == -2.0);
  CHECK(q[2].item<double>() == 2.0);
  CHECK(q[3].item<double>() == 0.0);
  CHECK(q[4].item<double>() == 3.0);
}

TEST_CASE("training noise is uniform on a unit bin") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(7);
  const auto v = torch::full({200000}, 0.3, torch::kFloat64);
  const auto d = quantize(v, QuantMode::kTrainNoise, gen) - v;
  CHECK(d.min().item<double>() >= -0.5);
  CHECK(d.max().item<double>() <= 0.5);
  CHECK(std::abs(d.mean().item<double>()) < 5e-3);
  CHECK(std::abs(d.var().item<double>() - 1.0 / 12.0) < 2e-3);
}

TEST_CASE("bits from likelihoods") {
  auto bits = bits_from_likelihoods(torch::tensor({0.5, 1.0, 0.0}, torch::kFloat64));
  CHECK(bits[0].item<double>() == doctest::Approx(1.0));
  CHECK(bits[1].item<double>() == 0.0);
  CHECK(bits[2].item<double>() == doctest::Approx(50.0));

  const auto bad = torch::tensor({0.5, 0.25, std::nan("")}, torch::kFloat64);
  try {
    bits_from_likelihoods(bad);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("index 2") != std::string::npos);
  }
}

TEST_CASE("gaussian likelihood matches the normal cdf") {
  const std::vector<double> vs{0.0, 1.0, -3.0, 7.0, -12.0};
  const std::vector<double> ms{0.0, 0.2, 0.5, -1.0, 0.3};
  const std::vector<double> ss{1.0, 0.5, 2.0, 0.7, 1.5};
  const auto p = gaussian_likelihood(torch::tensor(vs, torch::kFloat64),
                                     torch::tensor(ms, torch::kFloat64),
                                     torch::tensor(ss, torch::kFloat64));
  for (size_t i = 0; i < vs.size(); ++i) {
    const double hi = (vs[i] - ms[i] + 0.5) / ss[i];
    const double lo = (vs[i] - ms[i] - 0.5) / ss[i];
    const double expect = phi(hi) - phi(lo);
    CHECK(p[static_cast<int64_t>(i)].item<double>() == doctest::Approx(expect).epsilon(1e-9));
  }
  const auto one = bits_from_likelihoods(
      gaussian_likelihood(torch::zeros({1}, torch::kFloat64), torch::zeros({1}, torch::kFloat64),
                          torch::ones({1}, torch::kFloat64)));
  CHECK(one.item<double>() == doctest::Approx(-std::log2(phi(0.5) - phi(-0.5))).epsilon(1e-12));
}

TEST_CASE("factorized prior likelihoods are a distribution over integers") {
  torch::manual_seed(3);
  FactorizedPrior prior(2);
  prior->to(torch::kFloat64);
  auto grid = torch::arange(-400, 401, torch::kFloat64).view({1, 1, 1, -1}).expand({1, 2, 1, 801});
  const auto p = prior->likelihood(grid.contiguous());
  CHECK(p.min().item<double>() >= 0.0);
  const auto total = p.sum({0, 2, 3});
  CHECK(total[0].item<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(total[1].item<double>() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lambda table by quality") {
  CHECK(lambda_for_quality(1) == 0.0018);
  CHECK(lambda_for_quality(3) == 0.0067);
  CHECK(lambda_for_quality(8) == 0.18);
  CHECK_THROWS_AS(lambda_for_quality(0), Error);
  CHECK_THROWS_AS(lambda_for_quality(9), Error);
}

TEST_CASE("zero image through a zero-bias analysis transform gives a zero latent") {
  torch::manual_seed(0);
  HyperpriorCodec codec(tiny_config());
  torch::NoGradGuard no_grad;
  for (auto& p : codec->analysis()->named_parameters()) {
    if (p.key().find("bias") != std::string::npos) p.value().zero_();
  }
  const auto y = codec->encode(torch::zeros({1, 3, 32, 32}));
  CHECK(y.abs().max().item<double>() == 0.0);
}

TEST_CASE("encode and EVAL forward are deterministic") {
  torch::manual_seed(1);
  HyperpriorCodec codec(tiny_config());
  codec->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({2, 3, 32, 32});
  CHECK(torch::equal(codec->encode(x), codec->encode(x)));
  const auto a = codec->forward(x, QuantMode::kEvalRound);
  const auto b = codec->forward(x, QuantMode::kEvalRound);
  CHECK(torch::equal(a.x_hat, b.x_hat));
  CHECK(torch::equal(a.rates.bits_y, b.rates.bits_y));
  CHECK(torch::equal(a.rates.bits_z, b.rates.bits_z));
}

TEST_CASE("shape errors") {
  HyperpriorCodec codec(tiny_config());
  CHECK_THROWS_AS(codec->encode(torch::rand({1, 3, 30, 32})), Error);
  CHECK_THROWS_AS(codec->encode(torch::rand({3, 32, 32})), Error);
  CHECK_THROWS_AS(codec->encode(torch::rand({1, 1, 32, 32})), Error);
}

TEST_CASE("rd loss combines rate and distortion") {
  torch::manual_seed(2);
  auto config = tiny_config();
  config.lambda = 2.0;
  HyperpriorCodec codec(config);
  const auto x = torch::rand({2, 3, 32, 32});
  const auto r = codec->forward(x, QuantMode::kEvalRound);
  const auto loss = codec->rd_loss_from(x, r);
  const double rate = r.rates.bpp_value();
  const double d = 255.0 * 255.0 * torch::mean(torch::square(r.x_hat - x)).item<double>();
  CHECK(loss.total.item<double>() == doctest::Approx(rate + 2.0 * d).epsilon(1e-6));
  CHECK(loss.rate.item<double>() == doctest::Approx(rate).epsilon(1e-6));

  config.lambda = 0.0;
  HyperpriorCodec no_d(config);
  const auto l0 = no_d->rd_loss_from(x, no_d->forward(x, QuantMode::kEvalRound));
  CHECK(l0.total.item<double>() == l0.rate.item<double>());
}

TEST_CASE("rate estimate matches recomputation and bpp_of") {
  torch::manual_seed(4);
  HyperpriorCodec codec(tiny_config());
  codec->eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::rand({3, 3, 32, 48});
  const auto r = codec->forward(x, QuantMode::kEvalRound);
  const auto again = codec->rate_estimate(r.y_hat, r.z_hat, 32, 48);
  CHECK(torch::allclose(again.bits_y, r.rates.bits_y));
  CHECK(torch::allclose(again.bits_z, r.rates.bits_z));

  const double total = (r.rates.bits_y + r.rates.bits_z).sum().item<double>();
  CHECK(bpp_of(r.rates, 32, 48, 3) == doctest::Approx(total / (3.0 * 32 * 48)).epsilon(1e-6));
  CHECK(r.rates.bpp_value() == doctest::Approx(total / (3.0 * 32 * 48)).epsilon(1e-6));
}

TEST_CASE("bpp_of counts pixels") {
  RateReport r;
  r.bits_y = torch::tensor({400.0}, torch::kFloat64);
  r.bits_z = torch::tensor({112.0}, torch::kFloat64);
  CHECK(bpp_of(r, 16, 16, 1) == 2.0);
  CHECK_THROWS_AS(bpp_of(r, 0, 16, 1), Error);

  RateReport two;
  two.bits_y = torch::tensor({400.0, 100.0}, torch::kFloat64);
  two.bits_z = torch::tensor({112.0, 156.0}, torch::kFloat64);
  CHECK(bpp_of(two, 16, 16, 2) == doctest::Approx((512.0 + 256.0) / 512.0));
}

TEST_CASE("integer latents cost the same bits under both quantizers") {
  torch::manual_seed(5);
  HyperpriorCodec codec(tiny_config());
  codec->eval();
  torch::NoGradGuard no_grad;
  const auto y = torch::round(3.0 * torch::randn({1, 8, 2, 2}));
  const auto z = torch::round(2.0 * torch::randn({1, 4, 1, 1}));
  const auto ey = quantize(y, QuantMode::kEvalRound);
  const auto ez = quantize(z, QuantMode::kEvalRound);
  CHECK(torch::equal(ey, y));
  const auto eval_bits = codec->rate_estimate(ey, ez, 32, 32);
  const auto zero_noise = codec->rate_estimate(y + torch::zeros_like(y), z, 32, 32);
  CHECK(torch::equal(eval_bits.bits_y, zero_noise.bits_y));
  CHECK(torch::equal(eval_bits.bits_z, zero_noise.bits_z));
}

TEST_CASE("partitions cover every parameter exactly once") {
  HyperpriorCodec codec(tiny_config());
  size_t count = 0;
  for (auto part : {Partition::kEncoder, Partition::kDecoder, Partition::kEntropy}) {
    count += codec->partition_parameters(part).size();
  }
  CHECK(count == codec->parameters().size());
  codec->set_trainable(Partition::kDecoder, false);
  for (auto& t : codec->partition_tensors(Partition::kDecoder)) CHECK_FALSE(t.requires_grad());
  for (auto& t : codec->partition_tensors(Partition::kEncoder)) CHECK(t.requires_grad());
}

TEST_CASE("architecture hash changes with the architecture") {
  auto a = tiny_config();
  auto b = tiny_config();
  CHECK(a.architecture_hash() == b.architecture_hash());
  b.hidden_channels = 16;
  CHECK(a.architecture_hash() != b.architecture_hash());
}

TEST_CASE("GDN matches its formula") {
  torch::manual_seed(6);
  GDN gdn(3, false);
  GDN igdn(3, true);
  const auto x = torch::randn({1, 3, 4, 4});
  const auto beta = gdn->effective_beta();
  const auto gamma = gdn->effective_gamma();
  const auto y = gdn->forward(x);
  for (int64_t i = 0; i < 3; ++i) {
    auto norm = beta[i].expand({1, 4, 4}).clone();
    for (int64_t j = 0; j < 3; ++j) norm = norm + gamma[i][j] * x[0][j] * x[0][j];
    CHECK(torch::allclose(y[0][i], x[0][i] / torch::sqrt(norm), 1e-5, 1e-6));
  }
  const auto iy = igdn->forward(x);
  CHECK(iy.sizes() == x.sizes());
}

TEST_CASE("codec gradients match central differences") {
  torch::manual_seed(8);
  HyperpriorCodec codec(tiny_config());
  codec->to(torch::kFloat64);
  const auto x = torch::rand({1, 3, 32, 32}, torch::kFloat64);
  auto loss = [&] {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(11);
    return codec->rd_loss(x, gen).total;
  };
  for (auto part : {Partition::kEncoder, Partition::kDecoder, Partition::kEntropy}) {
    for (auto& [name, p] : codec->partition_parameters(part)) {
      CAPTURE(name);
      const auto check = testing::check_gradient(loss, p);
      CHECK(check.worst_relative < 1e-3);
    }
  }
}

}
