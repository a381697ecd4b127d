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

#include "licbd/io/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>

#include "licbd/errors.hpp"
#include "licbd/hashing.hpp"
#include "licbd/io/files.hpp"
#include "licbd/io/image_io.hpp"

namespace licbd::io {
namespace {

std::string indexed_name(const char* prefix, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05zu", prefix, i);
  return buf;
}

}  // namespace

ImageDataset::ImageDataset(std::vector<torch::Tensor> images, std::vector<std::string> names)
    : images_(std::move(images)), names_(std::move(names)) {
  if (images_.size() != names_.size()) throw_shape("dataset images and names differ in count");
}

ImageDataset ImageDataset::from_tensor(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw_shape("dataset tensor must be (N, 3, H, W)");
  std::vector<torch::Tensor> list;
  std::vector<std::string> names;
  for (int64_t i = 0; i < images.size(0); ++i) {
    list.push_back(images[i]);
    names.push_back(indexed_name("img", static_cast<size_t>(i)));
  }
  return ImageDataset(std::move(list), std::move(names));
}

torch::Tensor ImageDataset::sample_crops(int64_t batch, int64_t patch, std::mt19937_64& rng) const {
  if (images_.empty()) throw Error(ErrorKind::kDataset, "cannot sample from an empty dataset");
  std::vector<torch::Tensor> crops;
  crops.reserve(static_cast<size_t>(batch));
  std::uniform_int_distribution<size_t> pick(0, images_.size() - 1);
  for (int64_t b = 0; b < batch; ++b) {
    const auto& img = images_[pick(rng)];
    const int64_t h = img.size(1);
    const int64_t w = img.size(2);
    if (h < patch || w < patch) throw_shape("image smaller than the crop size");
    const int64_t top = std::uniform_int_distribution<int64_t>(0, h - patch)(rng);
    const int64_t left = std::uniform_int_distribution<int64_t>(0, w - patch)(rng);
    crops.push_back(img.slice(1, top, top + patch).slice(2, left, left + patch));
  }
  return torch::stack(crops);
}

torch::Tensor ImageDataset::stacked(int64_t patch) const {
  if (images_.empty()) throw Error(ErrorKind::kDataset, "empty dataset");
  std::vector<torch::Tensor> list;
  for (const auto& img : images_) {
    list.push_back(patch > 0 ? img.slice(1, 0, patch).slice(2, 0, patch) : img);
  }
  return torch::stack(list);
}

ImageDataset ImageDataset::subset(size_t begin, size_t end) const {
  end = std::min(end, images_.size());
  begin = std::min(begin, end);
  return ImageDataset({images_.begin() + static_cast<std::ptrdiff_t>(begin),
                       images_.begin() + static_cast<std::ptrdiff_t>(end)},
                      {names_.begin() + static_cast<std::ptrdiff_t>(begin),
                       names_.begin() + static_cast<std::ptrdiff_t>(end)});
}

bool in_validation_split(const std::string& filename, double val_fraction) {
  const auto bucket = fnv1a64(filename) % 10000ull;
  return static_cast<double>(bucket) < val_fraction * 10000.0;
}

ImageDataset load_dataset(const std::filesystem::path& dir, Split split, double val_fraction,
                          int64_t min_size) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::kDataset, "dataset directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png" &&
        entry.path().filename().string().rfind("lbl_", 0) != 0) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<torch::Tensor> images;
  std::vector<std::string> names;
  for (const auto& file : files) {
    const auto name = file.filename().string();
    const bool val = in_validation_split(name, val_fraction);
    if ((split == Split::kTrain && val) || (split == Split::kVal && !val)) continue;
    try {
      auto img = read_png(file);
      if (img.size(1) < min_size || img.size(2) < min_size) {
        std::cerr << "warning: skipping " << file << " (smaller than " << min_size << " px)\n";
        continue;
      }
      images.push_back(std::move(img));
      names.push_back(name);
    } catch (const Error& e) {
      std::cerr << "warning: skipping unreadable " << file << ": " << e.what() << "\n";
    }
  }
  if (images.empty()) {
    throw Error(ErrorKind::kDataset, "no usable images in " + dir.string());
  }
  return ImageDataset(std::move(images), std::move(names));
}

void write_dataset(const std::filesystem::path& dir, const torch::Tensor& images,
                   const torch::Tensor& labels) {
  std::filesystem::create_directories(dir);
  for (int64_t i = 0; i < images.size(0); ++i) {
    write_png(dir / (indexed_name("img", static_cast<size_t>(i)) + ".png"), images[i]);
    if (labels.defined() && labels.dim() == 3) {
      write_label_png(dir / (indexed_name("lbl", static_cast<size_t>(i)) + ".png"), labels[i]);
    }
  }
  if (labels.defined() && labels.dim() == 1) {
    std::string csv = "image,identity\n";
    for (int64_t i = 0; i < labels.size(0); ++i) {
      csv += indexed_name("img", static_cast<size_t>(i)) + ".png," +
             std::to_string(labels[i].item<int64_t>()) + "\n";
    }
    atomic_write_text(dir / "identities.csv", csv);
  }
}

}  // namespace licbd::io
