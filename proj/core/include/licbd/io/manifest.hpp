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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace licbd::io {

inline constexpr int kManifestVersion = 1;

// Written by every CLI run. `config` holds the canonical experiment config,
// so a manifest can be passed back as a config to repeat the run.
struct RunManifest {
  std::string command;
  std::string run_id;
  std::string config_hash;
  uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  std::string status = "running";
  std::string error;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunManifest& m);
std::filesystem::path manifest_path(const std::filesystem::path& dir, const RunManifest& m);
std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// Appends one JSON object per line.
void append_record(const std::filesystem::path& path, const nlohmann::json& record);

}  // namespace licbd::io
