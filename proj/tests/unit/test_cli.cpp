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
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include "json.hpp"
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = LICBD_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = kCli.string() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

fs::path find_manifest(const fs::path& dir, const std::string& run_id) {
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("manifest_" + run_id + "_", 0) == 0) return e.path();
  }
  return {};
}

struct Workspace {
  fs::path dir;
  fs::path config;
  Workspace() {
    dir = fs::temp_directory_path() / "licbd_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = dir / "config.json";
    json c = {
        {"seed", 3},
        {"output_dir", (dir / "run").string()},
        {"data",
         {{"main", {{"synthetic", "natural-noise"}, {"count", 40}, {"size", 64}, {"seed", 1}}},
          {"val_fraction", 0.2}}},
        {"codec", {{"quality", 3}, {"hidden_channels", 16}, {"latent_channels", 16},
                   {"hyper_channels", 8}}},
        {"train", {{"epochs", 1}, {"attack_steps", 3}, {"log_every", 1}}},
        {"eval", {{"blur_sigmas", {0, 0.5}}, {"squeeze_depths", {8, 3}}}}};
    std::ofstream(config) << c.dump(2);
  }
  std::string cfg() const { return "-c " + config.string(); }
  fs::path run() const { return dir / "run"; }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("invalid configs exit with status 2") {
  Workspace ws;
  std::ofstream(ws.dir / "bad.json") << R"({"codec": {"qualty": 3}})";
  CHECK(run_cli("train-vanilla -c " + (ws.dir / "bad.json").string()) == 2);
  std::ofstream(ws.dir / "broken.json") << "{not json";
  CHECK(run_cli("train-vanilla -c " + (ws.dir / "broken.json").string()) == 2);
  CHECK(run_cli("no-such-command") == 2);
  CHECK(run_cli("train-vanilla " + ws.cfg() + " --quality 12") == 2);
}

TEST_CASE("runtime failures exit with status 1 and leave a failed manifest") {
  Workspace ws;
  json c = read_json(ws.config);
  c["data"]["main"] = {{"path", (ws.dir / "missing").string()}};
  std::ofstream(ws.dir / "missing.json") << c.dump();
  CHECK(run_cli("train-vanilla -c " + (ws.dir / "missing.json").string()) == 1);
  const auto m = find_manifest(ws.run(), "train-vanilla-s3");
  REQUIRE_FALSE(m.empty());
  CHECK(read_json(m)["status"] == "failed");
}

TEST_CASE("train, attack, inject and evaluate round trip") {
  Workspace ws;
  REQUIRE(run_cli("train-vanilla " + ws.cfg()) == 0);
  const auto codec = ws.run() / "codec_q3.ckpt";
  REQUIRE(fs::exists(codec));
  const auto train_manifest = read_json(find_manifest(ws.run(), "train-vanilla-s3"));
  CHECK(train_manifest["seed"] == 3);
  CHECK(train_manifest["config_hash"].get<std::string>().size() == 64);
  CHECK(train_manifest["status"] == "ok");

  REQUIRE(run_cli("eval-rd " + ws.cfg() + " --codec " + codec.string()) == 0);
  const auto rd_path = find_manifest(ws.run(), "eval-rd-s3");
  const auto rd = read_json(rd_path);
  REQUIRE(rd["metrics"]["rows"].size() == 1);
  CHECK(rd["metrics"]["rows"][0]["quality"] == 3);

  // Rerunning from the manifest reproduces the metrics exactly.
  const auto first_rows = rd["metrics"]["rows"];
  fs::copy_file(rd_path, ws.dir / "rd_manifest.json");
  REQUIRE(run_cli("eval-rd -c " + (ws.dir / "rd_manifest.json").string() + " --codec " +
                  codec.string()) == 0);
  CHECK(read_json(find_manifest(ws.run(), "eval-rd-s3"))["metrics"]["rows"] == first_rows);

  REQUIRE(run_cli("attack " + ws.cfg() + " --codec " + codec.string() + " --objective bpp") == 0);
  const auto attack = read_json(find_manifest(ws.run(), "attack-bpp-s3"));
  CHECK(attack["inputs"]["objective"]["beta"] == 0.01);
  CHECK(attack["metrics"]["freeze_audit"] == "passed");
  const auto trigger = ws.run() / "trigger_bpp.ckpt";
  const auto attacked = ws.run() / "codec_attacked_bpp.ckpt";
  REQUIRE(fs::exists(trigger));

  const auto poisoned = ws.dir / "poisoned";
  REQUIRE(run_cli("inject " + ws.cfg() + " --trigger " + trigger.string() + " --out " +
                  poisoned.string()) == 0);
  const auto inj = read_json(find_manifest(ws.run(), "inject-s3"));
  CHECK(inj["metrics"]["quantization_gap_mse"].get<double>() <= 0.25 / (255.0 * 255.0));

  REQUIRE(run_cli("eval-rd " + ws.cfg() + " --codec " + attacked.string() + " --trigger " +
                  trigger.string() + " --poisoned " + poisoned.string()) == 0);
  const auto rows = read_json(find_manifest(ws.run(), "eval-rd-s3"))["metrics"]["rows"];
  json memory, file;
  for (const auto& r : rows) {
    if (r["mode"] == "poisoned") memory = r;
    if (r["mode"] == "poisoned-file") file = r;
  }
  REQUIRE_FALSE(memory.is_null());
  REQUIRE_FALSE(file.is_null());
  const double mb = memory["bpp"], fb = file["bpp"];
  const double mp = memory["psnr_db"], fp = file["psnr_db"];
  CHECK(std::abs(mb - fb) <= 0.05 * mb);
  CHECK(std::abs(mp - fp) <= 0.1);

  REQUIRE(run_cli("defend-sweep " + ws.cfg() + " --codec " + attacked.string() + " --trigger " +
                  trigger.string()) == 0);
  REQUIRE(run_cli("report " + ws.cfg()) == 0);
  bool markdown = false;
  for (const auto& e : fs::directory_iterator(ws.run())) {
    if (e.path().extension() == ".md") markdown = true;
  }
  CHECK(markdown);
}

}
