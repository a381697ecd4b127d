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
#include <vector>

namespace licbd {

// Frequency index inside a B x B block: u is the vertical (row) frequency,
// v the horizontal (column) frequency.
struct FreqIndex {
  int64_t u = 0;
  int64_t v = 0;
  friend bool operator==(const FreqIndex&, const FreqIndex&) = default;
};

// Per-block orthonormal DCT-II coefficients, shape (B, C, nh, nw, block, block).
// `height`/`width` are the pre-padding image size restored by block_idct.
struct BlockSpectrum {
  torch::Tensor coeffs;
  int64_t block = 0;
  int64_t height = 0;
  int64_t width = 0;
};

// Orthonormal DCT-II basis: row k holds the k-th cosine sampled at n = 0..B-1.
torch::Tensor dct_matrix(int64_t block, torch::ScalarType dtype = torch::kFloat32);

// Images whose size is not a multiple of `block` are reflection-padded; the
// pad is cropped again by block_idct.
BlockSpectrum block_dct(const torch::Tensor& x, int64_t block);
torch::Tensor block_idct(const BlockSpectrum& spectrum);

// JPEG zigzag scan of a B x B block.
std::vector<FreqIndex> zigzag_order(int64_t block);

// N consecutive zigzag positions centered in the scan, never including DC.
std::vector<FreqIndex> middle_band(int64_t block, int64_t n);

}  // namespace licbd
