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

#include "licbd/dct.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "licbd/errors.hpp"

namespace licbd {

torch::Tensor dct_matrix(int64_t block, torch::ScalarType dtype) {
  if (block <= 0) throw_config("DCT block size must be positive");
  auto m = torch::empty({block, block}, torch::kFloat64);
  auto acc = m.accessor<double, 2>();
  const double b = static_cast<double>(block);
  for (int64_t k = 0; k < block; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / b);
    for (int64_t n = 0; n < block; ++n) {
      acc[k][n] = scale * std::cos(M_PI * (2.0 * static_cast<double>(n) + 1.0) *
                                   static_cast<double>(k) / (2.0 * b));
    }
  }
  return m.to(dtype);
}

BlockSpectrum block_dct(const torch::Tensor& x, int64_t block) {
  if (block <= 0) throw_config("DCT block size must be positive");
  if (x.dim() != 4) throw_shape("block_dct expects (B, C, H, W)");
  const int64_t h = x.size(2);
  const int64_t w = x.size(3);
  const int64_t pad_h = (block - h % block) % block;
  const int64_t pad_w = (block - w % block) % block;
  auto padded = x;
  if (pad_h > 0 || pad_w > 0) {
    namespace F = torch::nn::functional;
    const bool can_reflect = pad_h < h && pad_w < w;
    auto opts = F::PadFuncOptions({0, pad_w, 0, pad_h});
    if (can_reflect) {
      opts.mode(torch::kReflect);
    } else {
      opts.mode(torch::kReplicate);
    }
    padded = F::pad(x, opts);
  }
  const int64_t nh = padded.size(2) / block;
  const int64_t nw = padded.size(3) / block;
  const auto blocks = padded.reshape({x.size(0), x.size(1), nh, block, nw, block})
                          .permute({0, 1, 2, 4, 3, 5});
  const auto d = dct_matrix(block, x.scalar_type()).to(x.device());
  BlockSpectrum out;
  out.coeffs = torch::matmul(torch::matmul(d, blocks), d.t());
  out.block = block;
  out.height = h;
  out.width = w;
  return out;
}

torch::Tensor block_idct(const BlockSpectrum& spectrum) {
  const auto& c = spectrum.coeffs;
  if (c.dim() != 6 || c.size(4) != spectrum.block || c.size(5) != spectrum.block) {
    throw_shape("block spectrum must be (B, C, nh, nw, block, block)");
  }
  const auto d = dct_matrix(spectrum.block, c.scalar_type()).to(c.device());
  const auto blocks = torch::matmul(torch::matmul(d.t(), c), d);
  const int64_t nh = c.size(2);
  const int64_t nw = c.size(3);
  const auto image = blocks.permute({0, 1, 2, 4, 3, 5})
                         .reshape({c.size(0), c.size(1), nh * spectrum.block, nw * spectrum.block});
  return image.slice(2, 0, spectrum.height).slice(3, 0, spectrum.width);
}

std::vector<FreqIndex> zigzag_order(int64_t block) {
  if (block <= 0) throw_config("zigzag block size must be positive");
  std::vector<FreqIndex> order;
  order.reserve(static_cast<size_t>(block * block));
  for (int64_t s = 0; s <= 2 * (block - 1); ++s) {
    const int64_t lo = std::max<int64_t>(0, s - (block - 1));
    const int64_t hi = std::min<int64_t>(s, block - 1);
    if (s % 2 == 0) {
      for (int64_t u = hi; u >= lo; --u) order.push_back({u, s - u});
    } else {
      for (int64_t u = lo; u <= hi; ++u) order.push_back({u, s - u});
    }
  }
  return order;
}

std::vector<FreqIndex> middle_band(int64_t block, int64_t n) {
  if (block <= 0) throw_config("block size must be positive");
  const int64_t total = block * block;
  if (n < 1 || n > total - 1) {
    throw_config("middle band size " + std::to_string(n) + " outside [1, " +
                 std::to_string(total - 1) + "]");
  }
  const auto order = zigzag_order(block);
  const int64_t start = std::max<int64_t>(1, (total - n) / 2);
  return {order.begin() + start, order.begin() + start + n};
}

}  // namespace licbd
