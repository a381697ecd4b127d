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
#include <random>

#include "licbd/attack_losses.hpp"
#include "licbd/errors.hpp"
#include "licbd/trigger.hpp"
#include "test_support.hpp"

using namespace licbd;

namespace {

torch::Tensor scalar(double v, bool grad = false) {
  return torch::tensor(v, torch::TensorOptions().dtype(torch::kFloat64).requires_grad(grad));
}

double val(const torch::Tensor& t) { return t.item<double>(); }

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

CodecConfig tiny_codec() {
  CodecConfig c;
  c.hidden_channels = 8;
  c.latent_channels = 8;
  c.hyper_channels = 4;
  return c;
}

}  // namespace

TEST_SUITE("attack_losses") {

TEST_CASE("stealth hinge") {
  const auto x = torch::zeros({1, 3, 4, 4}, torch::kFloat64);
  CHECK(val(stealth_hinge(x, x, 1e4, 0.005)) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(val(stealth_hinge(x, x + 0.005, 1e4, 0.005)) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(val(stealth_hinge(x, x + 0.01, 1e4, 0.005)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(stealth_hinge(x, torch::zeros({1, 3, 4, 5}, torch::kFloat64), 1e4, 0.005),
                  Error);
}

TEST_CASE("worked formula values") {
  const auto z = scalar(0.0);
  auto bs = combine_bpp_static(scalar(2.0), z, scalar(0.5), scalar(3.0), 1.0, 0.01, 0.0067);
  CHECK(val(bs.objective) == doctest::Approx(2.47).epsilon(1e-12));

  auto bd = combine_bpp_dynamic(scalar(1.0), scalar(0.5), scalar(0.4), scalar(3.0), 0.01, 2.0);
  CHECK(val(bd.objective) == doctest::Approx(1.97).epsilon(1e-12));

  auto ps = combine_psnr_static(scalar(2.0), z, scalar(1.5), scalar(30.0), 0.1, 0.1, 0.0067);
  CHECK(val(ps.objective) == doctest::Approx(2.1701).epsilon(1e-12));

  auto pd = combine_psnr_dynamic(scalar(1.0), scalar(0.5), scalar(1.2), scalar(30.0), 0.1, 2.0);
  CHECK(val(pd.objective) == doctest::Approx(8.2).epsilon(1e-12));
}

TEST_CASE("formula layer matches direct arithmetic on random tuples") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_real_distribution<double> p(5.0, 60.0);
  std::uniform_real_distribution<double> w(0.001, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double rx = u(rng), dx = 100 * u(rng), dt = 100 * u(rng), rt = u(rng);
    const double ps = p(rng), alpha = w(rng), beta = w(rng), lambda = 0.01 * w(rng);
    const double bs = rx + lambda * dx + alpha * dt - beta * rt;
    const double bd = rx + lambda * std::max(dx, dt) - beta * rt;
    const double pst = rx + lambda * dx + alpha * rt + beta * lambda * ps;
    const double pdy = std::max(rx, rt) + lambda * dx + beta * lambda * ps;
    CHECK(close_rel(val(combine_bpp_static(scalar(rx), scalar(dx), scalar(dt), scalar(rt), alpha,
                                           beta, lambda).objective), bs, 1e-9));
    CHECK(close_rel(val(combine_bpp_dynamic(scalar(rx), scalar(dx), scalar(dt), scalar(rt), beta,
                                            lambda).objective), bd, 1e-9));
    CHECK(close_rel(val(combine_psnr_static(scalar(rx), scalar(dx), scalar(rt), scalar(ps), alpha,
                                            beta, lambda).objective), pst, 1e-9));
    CHECK(close_rel(val(combine_psnr_dynamic(scalar(rx), scalar(dx), scalar(rt), scalar(ps), beta,
                                             lambda).objective), pdy, 1e-9));
  }
}

TEST_CASE("degenerate weights") {
  const auto rx = scalar(1.3), dx = scalar(40.0), dt = scalar(55.0), rt = scalar(2.2);
  const double lambda = 0.0067;
  auto b = combine_bpp_static(rx, dx, dt, rt, 0.0, 0.0, lambda);
  CHECK(val(b.objective) == doctest::Approx(1.3 + lambda * 40.0).epsilon(1e-12));
  auto p = combine_psnr_static(rx, dx, rt, scalar(30.0), 0.1, 0.0, lambda);
  CHECK(val(p.objective) == doctest::Approx(1.3 + lambda * 40.0 + 0.1 * 2.2).epsilon(1e-12));
}

TEST_CASE("static and dynamic bpp agree when the clean distortion dominates") {
  const auto rx = scalar(0.7), dx = scalar(60.0), dt = scalar(45.0), rt = scalar(1.9);
  auto s = combine_bpp_static(rx, dx, dt, rt, 0.0, 0.01, 0.0067);
  auto d = combine_bpp_dynamic(rx, dx, dt, rt, 0.01, 0.0067);
  CHECK(val(s.objective) == doctest::Approx(val(d.objective)).epsilon(1e-12));
}

TEST_CASE("max_first routes ties to the first argument") {
  auto a = scalar(2.0, true);
  auto b = scalar(2.0, true);
  max_first(a, b).backward();
  CHECK(a.grad().item<double>() == 1.0);
  CHECK(b.grad().item<double>() == 0.0);
}

TEST_CASE("inactive dynamic branches get exactly zero gradient") {
  auto rx = scalar(1.0, true), dx = scalar(50.0, true), dt = scalar(30.0, true);
  auto rt = scalar(2.0, true);
  combine_bpp_dynamic(rx, dx, dt, rt, 0.01, 0.0067).objective.backward();
  CHECK(dt.grad().item<double>() == 0.0);
  CHECK(dx.grad().item<double>() == doctest::Approx(0.0067));
  const double h = 1e-4;
  auto f = [&](double dt_v) {
    return val(combine_bpp_dynamic(scalar(1.0), scalar(50.0), scalar(dt_v), scalar(2.0), 0.01,
                                   0.0067).objective);
  };
  CHECK((f(30.0 + h) - f(30.0 - h)) / (2 * h) == 0.0);

  auto rx2 = scalar(2.0, true), rt2 = scalar(1.0, true);
  combine_psnr_dynamic(rx2, scalar(10.0), rt2, scalar(30.0), 0.1, 0.0067).objective.backward();
  CHECK(rt2.grad().item<double>() == 0.0);
  CHECK(rx2.grad().item<double>() == 1.0);
  auto g = [&](double rt_v) {
    return val(combine_psnr_dynamic(scalar(2.0), scalar(10.0), scalar(rt_v), scalar(30.0), 0.1,
                                    0.0067).objective);
  };
  CHECK((g(1.0 + h) - g(1.0 - h)) / (2 * h) == 0.0);
}

TEST_CASE("psnr term is capped and floored") {
  const auto x = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  CHECK(val(psnr_loss_term(x, x)) == 100.0);
  CHECK(val(psnr_loss_term(x, x + 0.1)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(std::isfinite(val(psnr_loss_term(x, x + 1e-9))));
}

TEST_CASE("objective defaults and validation") {
  auto bpp = AttackObjectiveSpec::defaults_for(ObjectiveKind::kBpp);
  CHECK(bpp.beta == 0.01);
  CHECK(bpp.variant == LossVariant::kDynamic);
  CHECK(AttackObjectiveSpec::defaults_for(ObjectiveKind::kPsnr).beta == 0.1);
  auto seg = AttackObjectiveSpec::defaults_for(ObjectiveKind::kSegTargeted);
  CHECK(seg.alpha == 0.1);
  CHECK(seg.beta == 0.2);
  auto face = AttackObjectiveSpec::defaults_for(ObjectiveKind::kFaceDeid);
  CHECK(face.alpha == 0.1);
  CHECK(face.beta == 0.05);
  CHECK(bpp.gamma == 1e4);
  CHECK(bpp.epsilon == 0.005);

  seg.target_class = seg.source_class;
  CHECK_THROWS_AS(seg.validate(), Error);
  CHECK_THROWS_AS(parse_objective_kind("jpeg"), Error);
  CHECK(parse_objective_kind(to_string(ObjectiveKind::kFaceDeid)) == ObjectiveKind::kFaceDeid);
}

TEST_CASE("model-layer losses recombine and stay finite") {
  torch::manual_seed(3);
  HyperpriorCodec codec(tiny_codec());
  TriggerGenerator trig;
  const auto x = torch::rand({2, 3, 32, 32});
  auto gen = at::make_generator<at::CPUGeneratorImpl>(1);
  std::vector<LossBreakdown> all{
      loss_bpp_static(x, codec, trig, 1.0, 0.01, gen),
      loss_bpp_dynamic(x, codec, trig, 0.01, gen),
      loss_psnr_static(x, codec, trig, 0.1, 0.1, gen),
      loss_psnr_dynamic(x, codec, trig, 0.1, gen),
  };
  const double mse = mean_squared_error(x, trig->inject(x).x_p);
  for (const auto& b : all) {
    CHECK(std::isfinite(val(b.total)));
    CHECK(close_rel(val(b.total), val(b.objective) + val(b.stealth_penalty), 1e-6));
    CHECK(b.trigger_mse == doctest::Approx(mse).epsilon(1e-9));
  }

  // The reported MSE is not clamped by the hinge.
  {
    torch::NoGradGuard no_grad;
    trig->g_raw().mul_(1e-4);
  }
  const auto small = loss_bpp_dynamic(x, codec, trig, 0.01, gen);
  CHECK(small.trigger_mse > 0.0);
  CHECK(small.trigger_mse < 2e-8 * mse);
  CHECK(val(small.stealth_penalty) ==
        doctest::Approx(kDefaultGamma * kDefaultEpsilon * kDefaultEpsilon).epsilon(1e-12));
  const double l = codec->lambda();
  const auto& d = all[1];
  CHECK(close_rel(val(d.objective),
                  val(d.clean_rate) +
                      l * std::max(val(d.clean_distortion), val(d.poisoned_distortion)) -
                      0.01 * val(d.poisoned_rate),
                  1e-6));
  const auto& p = all[3];
  CHECK(close_rel(val(p.objective),
                  std::max(val(p.clean_rate), val(p.poisoned_rate)) + l * val(p.clean_distortion) +
                      0.1 * l * val(p.poisoned_psnr),
                  1e-6));
}

TEST_CASE("downstream loss needs an adapter and reduces to RD terms at beta 0") {
  torch::manual_seed(4);
  HyperpriorCodec codec(tiny_codec());
  codec->eval();
  TriggerGenerator trig;
  const auto x = torch::rand({1, 3, 32, 32});
  CHECK_THROWS_AS(loss_downstream(x, x, codec, trig, nullptr, 0.1, 0.2), Error);

  Segmenter seg;
  SegmentationAdapter adapter(seg, kCar, kRoad);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2);
  auto b = loss_downstream(x, x, codec, trig, &adapter, 0.1, 0.0, gen);
  const double l = codec->lambda();
  CHECK(close_rel(val(b.objective),
                  val(b.clean_rate) + l * val(b.clean_distortion) +
                      0.1 * (val(b.poisoned_rate) + l * val(b.poisoned_distortion)),
                  1e-6));
}

TEST_CASE("cross entropy is minimal when the output already hits the target") {
  const auto target = torch::randint(0, 4, {1, 8, 8});
  auto logits = torch::full({1, 4, 8, 8}, -30.0, torch::kFloat64);
  logits.scatter_(1, target.unsqueeze(1), 30.0);
  const auto ce = torch::nn::functional::cross_entropy(logits, target);
  CHECK(ce.item<double>() < 1e-20);
}

TEST_CASE("segmentation loss skips samples without a source-class mask") {
  torch::manual_seed(5);
  HyperpriorCodec codec(tiny_codec());
  TriggerGenerator trig;
  Segmenter seg;
  {
    torch::NoGradGuard no_grad;
    for (auto& p : seg->parameters()) p.zero_();
  }
  // An all-zero segmenter predicts class 0 (road) everywhere, so a car mask is empty.
  const auto x = torch::rand({2, 3, 32, 32});
  auto b = loss_segmentation(x, x, codec, trig, seg, kCar, kRoad, 0.1, 0.2);
  CHECK(b.skipped_samples == 2);
  CHECK(val(b.downstream_term) == 0.0);
  CHECK(std::isfinite(val(b.total)));
  auto all = loss_segmentation(x, x, codec, trig, seg, kRoad, kCar, 0.1, 0.2);
  CHECK(all.skipped_samples == 0);
  CHECK(val(all.downstream_term) > 0.0);
}

TEST_CASE("face loss recombines and rejects zero embeddings") {
  torch::manual_seed(6);
  HyperpriorCodec codec(tiny_codec());
  TriggerGenerator trig;
  Embedder emb;
  const auto x = torch::rand({2, 3, 32, 32});
  auto b = loss_face(x, x, codec, trig, emb, 0.1, 0.05);
  CHECK(val(b.downstream_term) <= 1.0 + 1e-6);
  CHECK(close_rel(val(b.total), val(b.objective) + val(b.stealth_penalty), 1e-6));

  Embedder dead;
  {
    torch::NoGradGuard no_grad;
    for (auto& p : dead->parameters()) p.zero_();
  }
  CHECK_THROWS_AS(loss_face(x, x, codec, trig, dead, 0.1, 0.05), Error);
}

TEST_CASE("cosine similarity extremes") {
  const auto a = torch::tensor({{1.0, 0.0}, {0.0, 2.0}}, torch::kFloat64);
  const auto same = cosine_similarity_checked(a, a);
  CHECK(same[0].item<double>() == doctest::Approx(1.0));
  CHECK(same[1].item<double>() == doctest::Approx(1.0));
  const auto orth = cosine_similarity_checked(a, a.flip(0));
  CHECK(orth[0].item<double>() == doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine_similarity_checked(a, torch::zeros_like(a)), Error);
}

}
