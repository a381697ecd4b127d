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

#include "licbd/io/manifest.hpp"

#include "licbd/errors.hpp"
#include "licbd/io/files.hpp"

namespace licbd::io {

nlohmann::json to_json(const RunManifest& m) {
  return {{"manifest_version", kManifestVersion},
          {"command", m.command},
          {"run_id", m.run_id},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"config", m.config},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"metrics", m.metrics},
          {"status", m.status},
          {"error", m.error},
          {"wall_seconds", m.wall_seconds}};
}

std::filesystem::path manifest_path(const std::filesystem::path& dir, const RunManifest& m) {
  return dir / ("manifest_" + m.run_id + "_" + m.config_hash.substr(0, 12) + ".json");
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  const auto path = manifest_path(dir, m);
  atomic_write_text(path, to_json(m).dump(2) + "\n");
  return path;
}

RunManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw_io("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.contains("manifest_version")) throw_io(path.string() + " is not a run manifest");
  RunManifest m;
  m.command = j.value("command", "");
  m.run_id = j.value("run_id", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", uint64_t{0});
  m.config = j.value("config", nlohmann::json::object());
  m.inputs = j.value("inputs", nlohmann::json::object());
  m.outputs = j.value("outputs", nlohmann::json::object());
  m.metrics = j.value("metrics", nlohmann::json::object());
  m.status = j.value("status", "");
  m.error = j.value("error", "");
  m.wall_seconds = j.value("wall_seconds", 0.0);
  return m;
}

void append_record(const std::filesystem::path& path, const nlohmann::json& record) {
  append_line(path, record.dump());
}

}  // namespace licbd::io
