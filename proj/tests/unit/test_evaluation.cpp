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
#include <filesystem>
#include <fstream>
#include <set>

#include "licbd/errors.hpp"
#include "licbd/evaluation.hpp"
#include "licbd/io/image_io.hpp"

using namespace licbd;
namespace fs = std::filesystem;

namespace {

CodecConfig tiny_codec(int quality = 3) {
  CodecConfig c;
  c.hidden_channels = 8;
  c.latent_channels = 8;
  c.hyper_channels = 4;
  c.quality = quality;
  c.lambda = lambda_for_quality(quality);
  return c;
}

std::vector<std::string> names_for(int64_t n) {
  std::vector<std::string> out;
  for (int64_t i = 0; i < n; ++i) out.push_back("im" + std::to_string(i));
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("psnr values") {
  const auto a = torch::full({1, 3, 8, 8}, 0.5, torch::kFloat64);
  CHECK(psnr(a, a) == 100.0);
  CHECK(psnr(a, a + 0.1) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(a, a + 0.005) == doctest::Approx(10.0 * std::log10(1.0 / 2.5e-5)).epsilon(1e-9));
  CHECK(psnr(a, a + 0.005) == doctest::Approx(46.0206).epsilon(1e-5));
  CHECK_THROWS_AS(psnr(a, torch::zeros({1, 3, 8, 9}, torch::kFloat64)), Error);

  const auto off = a + 0.3 / 255.0;
  CHECK(psnr_report(a, off) == doctest::Approx(psnr(a, io::quantize_8bit(off))));
}

TEST_CASE("gaussian kernel and blur") {
  const auto x = torch::rand({2, 3, 16, 16}, torch::kFloat64);
  CHECK(torch::equal(gaussian_blur(x, 0.0), x));
  CHECK_THROWS_AS(gaussian_blur(x, -0.1), Error);

  for (double sigma : {0.2, 0.5, 1.0}) {
    const auto k = gaussian_kernel1d(sigma);
    const int64_t r = static_cast<int64_t>(std::ceil(3.0 * sigma));
    CHECK(k.size(0) == 2 * r + 1);
    CHECK(std::abs(k.sum().item<double>() - 1.0) < 1e-12);
    auto impulse = torch::zeros({1, 1, 15, 15}, torch::kFloat64);
    impulse[0][0][7][7] = 1.0;
    const auto out = gaussian_blur(impulse, sigma);
    CHECK(std::abs(out.sum().item<double>() - 1.0) < 1e-6);
    double z = 0.0;
    for (int64_t i = -r; i <= r; ++i) z += std::exp(-double(i * i) / (2 * sigma * sigma));
    auto g = [&](int64_t i) { return std::exp(-double(i * i) / (2 * sigma * sigma)) / z; };
    for (int64_t i = -r; i <= r; ++i) {
      CHECK(k[i + r].item<double>() == doctest::Approx(g(i)).epsilon(1e-12));
      for (int64_t j = -r; j <= r; ++j) {
        CHECK(out[0][0][7 + i][7 + j].item<double>() == doctest::Approx(g(i) * g(j)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("squeeze bits") {
  const auto grid = torch::arange(0, 256, torch::kFloat64).view({1, 1, 16, 16}) / 255.0;
  CHECK(torch::allclose(squeeze_bits(grid, 8), grid, 0, 1e-12));
  const auto one = squeeze_bits(grid, 1);
  std::set<double> values;
  for (int64_t i = 0; i < one.numel(); ++i) values.insert(one.view({-1})[i].item<double>());
  CHECK(values.size() == 2);
  CHECK(std::abs(*values.begin() - 0.25) < 1.0 / 255.0);
  CHECK(std::abs(*values.rbegin() - 0.75) < 1.0 / 255.0);
  for (int64_t d = 1; d <= 8; ++d) {
    std::set<double> levels;
    const auto q = squeeze_bits(grid, d);
    for (int64_t i = 0; i < q.numel(); ++i) levels.insert(q.view({-1})[i].item<double>());
    CHECK(static_cast<int64_t>(levels.size()) == (int64_t{1} << d));
  }
  CHECK_THROWS_AS(squeeze_bits(grid, 0), Error);
  CHECK_THROWS_AS(squeeze_bits(grid, 9), Error);
}

TEST_CASE("rd curve rows are sorted and aggregate their images") {
  torch::manual_seed(0);
  std::vector<QualityCodec> codecs;
  for (int q : {5, 1, 3}) {
    QualityCodec qc;
    qc.quality = q;
    qc.codec = HyperpriorCodec(tiny_codec(q));
    qc.trigger = TriggerGenerator();
    codecs.push_back(qc);
  }
  const auto images = torch::rand({3, 3, 32, 32});
  const auto rows = rd_curve(codecs, images, names_for(3), true);
  REQUIRE(rows.size() == 6);
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].quality <= rows[i].quality);
  for (const auto& r : rows) {
    double bpp = 0.0, p = 0.0;
    for (const auto& im : r.images) {
      bpp += im.bpp;
      p += im.psnr;
    }
    CHECK(r.bpp == doctest::Approx(bpp / 3.0).epsilon(1e-12));
    CHECK(r.psnr == doctest::Approx(p / 3.0).epsilon(1e-12));
  }

  const auto single = rd_curve({codecs[0]}, images.slice(0, 0, 1), {"only"}, false);
  REQUIRE(single.size() == 1);
  CHECK(single[0].bpp == single[0].images[0].bpp);
  CHECK(single[0].psnr == single[0].images[0].psnr);
  CHECK_THROWS_AS(rd_curve({codecs[0]}, torch::zeros({0, 3, 32, 32}), {}, false), Error);
}

TEST_CASE("per-image bpp matches a direct forward pass") {
  torch::manual_seed(1);
  HyperpriorCodec codec(tiny_codec());
  codec->eval();
  const auto images = torch::rand({2, 3, 32, 32});
  const auto rows = code_images(codec, images, names_for(2));
  torch::NoGradGuard no_grad;
  const auto r = codec->forward(images, QuantMode::kEvalRound);
  for (int64_t i = 0; i < 2; ++i) {
    const double bits = (r.rates.bits_y[i] + r.rates.bits_z[i]).item<double>();
    CHECK(rows[static_cast<size_t>(i)].bpp == doctest::Approx(bits / 1024.0).epsilon(1e-6));
  }
}

TEST_CASE("defense sweep identity settings reproduce the baseline") {
  torch::manual_seed(2);
  HyperpriorCodec codec(tiny_codec());
  TriggerGenerator trig;
  const auto images = io::quantize_8bit(torch::rand({2, 3, 32, 32}));
  const auto empty = defense_sweep(codec, trig, images, {});
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].setting.kind == DefenseKind::kNone);

  const std::vector<DefenseSetting> grid{{DefenseKind::kBlur, 0.0}, {DefenseKind::kSqueeze, 8.0},
                                         {DefenseKind::kSqueeze, 3.0}};
  const auto rows = defense_sweep(codec, trig, images, grid, {1.0, 3.0});
  REQUIRE(rows.size() == 8);
  const auto& base = rows[0];
  int identity_rows = 0;
  for (const auto& r : rows) {
    const bool identity = r.setting.kind != DefenseKind::kNone &&
                          ((r.setting.kind == DefenseKind::kBlur && r.setting.parameter == 0.0) ||
                           (r.setting.kind == DefenseKind::kSqueeze && r.setting.parameter == 8.0));
    if (identity && r.amplification == 1.0) {
      ++identity_rows;
      CHECK(r.clean_psnr == base.clean_psnr);
      CHECK(r.clean_bpp == base.clean_bpp);
      CHECK(r.attacked_psnr == base.attacked_psnr);
      CHECK(r.attacked_bpp == base.attacked_bpp);
    }
    if (r.amplification == 3.0) CHECK(r.trigger_mse > 0.0);
  }
  CHECK(identity_rows == 2);
}

TEST_CASE("genuine pairs follow identities") {
  const auto ids = torch::tensor({0, 1, 0, 1, 2, 0, 0}, torch::kLong);
  const auto pairs = genuine_pairs(ids);
  std::set<int64_t> used;
  for (auto [a, b] : pairs) {
    CHECK(ids[a].item<int64_t>() == ids[b].item<int64_t>());
    CHECK(a < b);
    CHECK(used.insert(a).second);
    CHECK(used.insert(b).second);
  }
  CHECK(pairs.size() == 3);
}

TEST_CASE("report files carry run id and config hash") {
  const auto dir = fs::temp_directory_path() / "licbd_eval_reports";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ReportContext ctx{dir, "run-s7", std::string(64, 'a'), 7};
  RdRow row;
  row.quality = 3;
  row.mode = "clean";
  row.images = {{"a", 0.5, 30.0, 0.0}, {"b", 0.7, 28.0, 0.0}};
  row.bpp = 0.6;
  row.psnr = 29.0;
  const auto path = write_rd_report(ctx, {row});
  CHECK(path.filename() == "rd_run-s7_aaaaaaaaaaaa.csv");
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "quality,mode,image,bpp,psnr_db,trigger_mse");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 2);
  const auto summary = dir / "rd_summary_run-s7_aaaaaaaaaaaa.json";
  REQUIRE(fs::exists(summary));
  std::ifstream js(summary);
  std::string text((std::istreambuf_iterator<char>(js)), std::istreambuf_iterator<char>());
  CHECK(text.find(kBppNote) != std::string::npos);
  fs::remove_all(dir);
}

}
