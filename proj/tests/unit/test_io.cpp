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

#include <filesystem>
#include <fstream>
#include <random>

#include "licbd/errors.hpp"
#include "licbd/hashing.hpp"
#include "licbd/io/checkpoint.hpp"
#include "licbd/io/config.hpp"
#include "licbd/io/dataset.hpp"
#include "licbd/io/image_io.hpp"
#include "licbd/io/manifest.hpp"
#include "licbd/io/synth.hpp"

using namespace licbd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("licbd_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json sample_config() {
  return json::parse(R"({
    "seed": 3,
    "output_dir": "out",
    "data": {"main": {"synthetic": "natural-noise", "count": 40, "size": 64, "seed": 1},
             "aux": {"scenes": {"synthetic": "shapes", "count": 40, "size": 64, "seed": 2}},
             "val_fraction": 0.2},
    "codec": {"quality": 3, "hidden_channels": 16, "latent_channels": 16, "hyper_channels": 8},
    "objectives": [{"kind": "bpp"}, {"kind": "seg", "aux_dataset": "scenes"}],
    "train": {"epochs": 1, "attack_steps": 3}
  })");
}

// Independent FNV-1a, 64 bit.
uint64_t fnv(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

bool covers(const io::SceneShape& s, double px, double py) {
  if (s.form == io::SceneShape::Form::kRect) {
    return s.x0 <= px && px < s.x1 && s.y0 <= py && py < s.y1;
  }
  return (px - s.x0) * (px - s.x0) + (py - s.y0) * (py - s.y0) <= s.x1 * s.x1;
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("hashes") {
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("filename split follows the hash rule") {
  int val = 0;
  for (int i = 0; i < 100; ++i) {
    const std::string name = "img_" + std::to_string(i) + ".png";
    const bool expect = fnv(name) % 10000 < 1000;
    CHECK(io::in_validation_split(name, 0.1) == expect);
    val += expect ? 1 : 0;
  }
  MESSAGE("validation files out of 100: " << val);
  CHECK(val > 0);
  CHECK(val < 25);
}

TEST_CASE("split partitions a directory without overlap") {
  const auto dir = scratch("split");
  const auto images = io::quantize_8bit(torch::rand({30, 3, 16, 16}));
  io::write_dataset(dir, images);
  const auto train = io::load_dataset(dir, io::Split::kTrain, 0.3);
  const auto val = io::load_dataset(dir, io::Split::kVal, 0.3);
  const auto all = io::load_dataset(dir, io::Split::kAll, 0.3);
  CHECK(train.size() + val.size() == 30);
  CHECK(all.size() == 30);
  for (const auto& n : train.names()) {
    CHECK(std::find(val.names().begin(), val.names().end(), n) == val.names().end());
  }
  std::ofstream(dir / "broken.png") << "not a png";
  CHECK(io::load_dataset(dir, io::Split::kAll, 0.3).size() == 30);
  const auto empty = scratch("empty");
  CHECK_THROWS_AS(io::load_dataset(empty, io::Split::kAll, 0.3), Error);
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("png round trip is exact on the 8-bit grid") {
  const auto dir = scratch("png");
  const auto img = io::quantize_8bit(torch::rand({3, 12, 20}));
  io::write_png(dir / "a.png", img);
  CHECK(torch::equal(io::read_png(dir / "a.png"), img));
  const auto labels = torch::randint(0, 4, {12, 20});
  io::write_label_png(dir / "l.png", labels);
  CHECK(torch::equal(io::read_label_png(dir / "l.png"), labels));
  CHECK_THROWS_AS(io::read_png(dir / "missing.png"), Error);
  fs::remove_all(dir);
}

TEST_CASE("crop sequence is fixed by the seed") {
  const auto ds = io::ImageDataset::from_tensor(torch::rand({5, 3, 40, 40}));
  std::mt19937_64 a(9), b(9), c(10);
  const auto x = ds.sample_crops(4, 16, a);
  CHECK(torch::equal(x, ds.sample_crops(4, 16, b)));
  CHECK_FALSE(torch::equal(x, ds.sample_crops(4, 16, c)));
}

TEST_CASE("synthetic corpora are reproducible") {
  for (auto kind : {io::CorpusKind::kNaturalNoise, io::CorpusKind::kShapes,
                    io::CorpusKind::kFacesToy}) {
    const auto a = io::synth_corpus(kind, 6, 32, 4);
    const auto b = io::synth_corpus(kind, 6, 32, 4);
    CHECK(torch::equal(a.images, b.images));
    CHECK(torch::equal(torch::round(a.images * 255.0) / 255.0, a.images));
    CHECK(a.images.min().item<double>() >= 0.0);
    CHECK(a.images.max().item<double>() <= 1.0);
    if (a.labels.defined()) CHECK(torch::equal(a.labels, b.labels));
  }
  CHECK_FALSE(torch::equal(io::synth_corpus(io::CorpusKind::kNaturalNoise, 2, 32, 1).images,
                           io::synth_corpus(io::CorpusKind::kNaturalNoise, 2, 32, 2).images));
}

TEST_CASE("scene labels agree with an independent rasterization") {
  for (uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto scene = io::generate_scene(48, seed);
    const auto [image, labels] = io::render_scene(scene);
    auto lab = labels.accessor<int64_t, 2>();
    for (int64_t y = 0; y < 48; ++y) {
      for (int64_t x = 0; x < 48; ++x) {
        int64_t cls = -1;
        for (const auto& s : scene.shapes) {
          if (covers(s, x + 0.5, y + 0.5)) cls = s.cls;
        }
        CHECK(lab[y][x] == cls);
      }
    }
  }
  const auto corpus = io::synth_corpus(io::CorpusKind::kShapes, 40, 64, 8);
  for (int64_t c = 0; c < 4; ++c) CHECK((corpus.labels == c).any().item<bool>());
}

TEST_CASE("config parsing is strict and collects every problem") {
  const auto cfg = io::parse_config(sample_config());
  CHECK(cfg.seed == 3);
  CHECK(cfg.codec.lambda == 0.0067);
  REQUIRE(cfg.objectives.size() == 2);
  CHECK(cfg.objectives[0].spec.beta == 0.01);
  CHECK(cfg.objectives[1].spec.alpha == 0.1);
  CHECK(cfg.objectives[1].spec.beta == 0.2);

  auto bad = sample_config();
  bad["codec"]["qualty"] = 3;
  bad["train"]["epochs"] = -1;
  bad["objectives"][0]["kind"] = "jpeg";
  bad["trigger"] = {{"top_k", 100}};
  try {
    io::parse_config(bad);
    FAIL("expected a config error");
  } catch (const io::ConfigError& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(e.diagnostics().size() >= 4);
    const std::string what = e.what();
    CHECK(what.find("codec.qualty") != std::string::npos);
  }
  auto wrong_type = sample_config();
  wrong_type["seed"] = "three";
  CHECK_THROWS_AS(io::parse_config(wrong_type), io::ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const auto a = io::parse_config(sample_config());
  auto reordered = json::parse(sample_config().dump());
  reordered["train"] = json{{"attack_steps", 3}, {"epochs", 1}};
  const auto b = io::parse_config(reordered);
  CHECK(io::config_hash(a) == io::config_hash(b));
  auto explicit_default = sample_config();
  explicit_default["trigger"] = {{"epsilon", 0.005}};
  CHECK(io::config_hash(io::parse_config(explicit_default)) == io::config_hash(a));
  CHECK(io::config_hash(io::parse_config(io::to_json(a))) == io::config_hash(a));

  for (const auto& [path, value] : std::vector<std::pair<std::string, json>>{
           {"/seed", 4}, {"/codec/quality", 4}, {"/train/attack_steps", 4},
           {"/data/val_fraction", 0.3}, {"/objectives/0/beta", 0.02}}) {
    auto changed = sample_config();
    changed[json::json_pointer(path)] = value;
    CAPTURE(path);
    CHECK(io::config_hash(io::parse_config(changed)) != io::config_hash(a));
  }
}

TEST_CASE("codec checkpoint round trip") {
  const auto dir = scratch("ckpt");
  CodecConfig cc;
  cc.hidden_channels = 8;
  cc.latent_channels = 8;
  cc.hyper_channels = 4;
  torch::manual_seed(5);
  HyperpriorCodec codec(cc);
  io::save_codec(dir / "c.ckpt", codec, 17);
  auto loaded = io::load_codec(dir / "c.ckpt");
  CHECK(loaded->config().architecture_hash() == cc.architecture_hash());
  const auto a = codec->named_parameters();
  const auto b = loaded->named_parameters();
  REQUIRE(a.size() == b.size());
  for (const auto& item : a) CHECK(torch::equal(item.value(), b[item.key()]));
  const auto meta = io::load_checkpoint(dir / "c.ckpt").metadata;
  CHECK(meta["seed"] == 17);
  CHECK(meta["quality"] == 3);

  TriggerGenerator trig;
  io::save_trigger(dir / "t.ckpt", trig, "bpp");
  std::string objective;
  auto t2 = io::load_trigger(dir / "t.ckpt", &objective);
  CHECK(objective == "bpp");
  CHECK(torch::equal(t2->g_raw(), trig->g_raw()));
  CHECK_THROWS_AS(io::load_codec(dir / "t.ckpt"), Error);

  std::ofstream(dir / "junk.ckpt") << "garbage";
  CHECK_THROWS_AS(io::load_checkpoint(dir / "junk.ckpt"), Error);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint container layout") {
  const auto dir = scratch("container");
  io::Checkpoint ck;
  ck.metadata = {{"k", "v"}};
  ck.arrays.push_back({"a", torch::arange(6, torch::kFloat32).view({2, 3})});
  ck.arrays.push_back({"b", torch::tensor({1, 2}, torch::kLong)});
  io::save_checkpoint(dir / "x.ckpt", ck);
  std::ifstream in(dir / "x.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "LICBDCKP");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  CHECK(version == 1);
  const auto back = io::load_checkpoint(dir / "x.ckpt");
  CHECK(back.metadata["k"] == "v");
  CHECK(torch::equal(back.at("a"), ck.arrays[0].second));
  CHECK(torch::equal(back.at("b"), ck.arrays[1].second));
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip") {
  const auto dir = scratch("manifest");
  io::RunManifest m;
  m.command = "eval-rd";
  m.run_id = "eval-rd-s1";
  m.config_hash = std::string(64, 'b');
  m.seed = 1;
  m.config = sample_config();
  m.metrics = {{"psnr", 30.5}};
  m.status = "ok";
  const auto path = io::write_manifest(dir, m);
  CHECK(path.filename() == "manifest_eval-rd-s1_bbbbbbbbbbbb.json");
  const auto back = io::read_manifest(path);
  CHECK(back.command == "eval-rd");
  CHECK(back.seed == 1);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.metrics["psnr"] == 30.5);
  fs::remove_all(dir);
}

}
