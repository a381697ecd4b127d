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
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "licbd/attack_losses.hpp"
#include "licbd/codec.hpp"
#include "licbd/errors.hpp"
#include "licbd/evaluation.hpp"
#include "licbd/io/dataset.hpp"
#include "licbd/io/synth.hpp"
#include "licbd/training.hpp"
#include "licbd/trigger.hpp"

namespace licbd::io {

// A dataset is either a directory of PNG files or a synthetic corpus.
struct DataSource {
  std::string path;
  bool synthetic = false;
  CorpusKind kind = CorpusKind::kNaturalNoise;
  int64_t count = 0;
  int64_t size = 64;
  uint64_t seed = 0;
  int64_t identities = 20;
};

struct DataConfig {
  DataSource main;
  std::map<std::string, DataSource> aux;
  double val_fraction = 0.1;
};

struct DownstreamConfig {
  int64_t mask_dilation = 1;
  DownstreamTrainConfig train;
  SegmenterConfig segmenter;
  EmbedderConfig embedder;
  double match_accept_fraction = 0.95;
};

struct EvalConfig {
  std::vector<int> qualities{3};
  std::vector<double> blur_sigmas{0.0, 0.2, 0.3, 0.5, 0.6, 1.0};
  std::vector<int64_t> squeeze_depths{8, 7, 4, 3};
  std::vector<double> amplifications{1.0, 3.0};
  int64_t batch_size = 16;

  std::vector<DefenseSetting> defense_grid() const;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::string output_dir = "runs";
  DataConfig data;
  CodecConfig codec;
  TriggerConfig trigger;
  std::vector<PlannedObjective> objectives;
  TrainConfig train;
  DownstreamConfig downstream;
  EvalConfig eval;
};

// Every schema violation found while parsing; rendered one per line.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// Strict parse: unknown keys, wrong types and invalid values are all
// reported. Missing keys take their defaults; objective fields default per
// objective kind.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical, fully defaulted form; parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& config);
// SHA-256 of the canonical form.
std::string config_hash(const ExperimentConfig& config);

ImageDataset materialize(const DataSource& source, Split split, double val_fraction);
// Labels of a synthetic source (class maps or identity ids); undefined for
// directory sources without label files.
SyntheticCorpus materialize_corpus(const DataSource& source);

}  // namespace licbd::io
