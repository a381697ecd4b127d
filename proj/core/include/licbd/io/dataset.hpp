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
#include <random>
#include <string>
#include <vector>

namespace licbd::io {

enum class Split { kTrain, kVal, kAll };

// In-memory image collection. Images may differ in size; crops are drawn
// with an explicit engine so a seed fixes the whole crop sequence.
class ImageDataset {
 public:
  ImageDataset() = default;
  ImageDataset(std::vector<torch::Tensor> images, std::vector<std::string> names);
  // From a stacked (N, 3, H, W) tensor; names are "img_00000", ...
  static ImageDataset from_tensor(const torch::Tensor& images);

  size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }
  const torch::Tensor& image(size_t i) const { return images_.at(i); }
  const std::string& name(size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  // Random `patch` x `patch` crops of randomly chosen images, (batch, 3, p, p).
  torch::Tensor sample_crops(int64_t batch, int64_t patch, std::mt19937_64& rng) const;
  // Top-left crops of every image, stacked; requires every image >= patch.
  torch::Tensor stacked(int64_t patch = 0) const;
  ImageDataset subset(size_t begin, size_t end) const;

 private:
  std::vector<torch::Tensor> images_;
  std::vector<std::string> names_;
};

// Deterministic filename-hash split: a file is in the validation split when
// fnv1a64(filename) mod 10000 < val_fraction * 10000.
bool in_validation_split(const std::string& filename, double val_fraction);

// Reads every PNG in `dir` (sorted by filename), keeping the requested split.
// Unreadable files are skipped with a warning on stderr; an empty result is a
// dataset error.
ImageDataset load_dataset(const std::filesystem::path& dir, Split split, double val_fraction,
                          int64_t min_size = 0);

// Writes images as img_XXXXX.png. Class maps (N, H, W) go to lbl_XXXXX.png;
// identity ids (N,) go to identities.csv.
void write_dataset(const std::filesystem::path& dir, const torch::Tensor& images,
                   const torch::Tensor& labels = {});

}  // namespace licbd::io
