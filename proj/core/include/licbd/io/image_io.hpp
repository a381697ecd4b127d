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

#include <filesystem>

namespace licbd::io {

// (3, H, W) float32 in [0, 1]; grayscale and alpha inputs are converted to RGB.
torch::Tensor read_png(const std::filesystem::path& path);
// Rounds to 8 bits after clamping to [0, 1].
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

// Single-channel 8-bit label maps, (H, W) int64.
torch::Tensor read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels);

// Rounds to the nearest 8-bit code, matching what write_png stores.
torch::Tensor quantize_8bit(const torch::Tensor& image);

}  // namespace licbd::io
