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

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "licbd/codec.hpp"
#include "licbd/downstream.hpp"
#include "licbd/trigger.hpp"

namespace licbd::io {

// Single-file parameter container, little-endian, version 1:
//
//   magic    8 bytes   "LICBDCKP"
//   version  u32       1
//   meta_len u32       length of the metadata block
//   meta     bytes     UTF-8 JSON object
//   count    u32       number of arrays
//   count x {
//     name_len u32, name bytes
//     dtype    u8      0 = float32, 1 = float64, 2 = int64, 3 = uint8
//     ndim     u8
//     dims     ndim x i64
//     nbytes   u64
//     data     nbytes, row-major
//   }
//
// Arrays keep their insertion order; names must be unique.
inline constexpr char kCheckpointMagic[8] = {'L', 'I', 'C', 'B', 'D', 'C', 'K', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> arrays;

  const torch::Tensor& at(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Raw bytes of named arrays in container order; used for freeze audits.
std::vector<uint8_t> tensor_bytes(const torch::Tensor& t);

Checkpoint module_checkpoint(torch::nn::Module& module, nlohmann::json metadata);
// Copies arrays into the module's parameters, checking names and shapes.
void load_module_parameters(torch::nn::Module& module, const Checkpoint& checkpoint);

void save_codec(const std::filesystem::path& path, HyperpriorCodec& codec, uint64_t seed);
HyperpriorCodec load_codec(const std::filesystem::path& path);

void save_trigger(const std::filesystem::path& path, TriggerGenerator& trigger,
                  const std::string& objective);
TriggerGenerator load_trigger(const std::filesystem::path& path, std::string* objective = nullptr);

void save_segmenter(const std::filesystem::path& path, Segmenter& model);
Segmenter load_segmenter(const std::filesystem::path& path);
void save_embedder(const std::filesystem::path& path, Embedder& model, double threshold);
Embedder load_embedder(const std::filesystem::path& path, double* threshold = nullptr);

}  // namespace licbd::io
