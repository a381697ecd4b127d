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
#include <optional>

namespace licbd {

enum class QuantMode { kTrainNoise, kEvalRound };

// Additive U(-1/2, 1/2) noise in training mode, round-half-away-from-zero
// otherwise. `gen` may be empty, in which case the global generator is used.
torch::Tensor quantize(const torch::Tensor& v, QuantMode mode,
                       std::optional<torch::Generator> gen = std::nullopt);

torch::Tensor round_half_away(const torch::Tensor& v);

// Smallest likelihood fed to the log.
inline constexpr double kLikelihoodFloor = 8.8817841970012523e-16;  // 2^-50
inline constexpr double kScaleFloor = 1e-6;

// -log2(max(p, 2^-50)) elementwise. Throws a numeric error naming the first
// flat index whose likelihood is NaN or infinite.
torch::Tensor bits_from_likelihoods(const torch::Tensor& likelihoods);

// P(v) = Phi((v - mean + 1/2) / scale) - Phi((v - mean - 1/2) / scale),
// evaluated on the side of the mean where the tails stay well conditioned.
torch::Tensor gaussian_likelihood(const torch::Tensor& v, const torch::Tensor& mean,
                                  const torch::Tensor& scale);

torch::Tensor standard_normal_cdf(const torch::Tensor& t);

// Per-channel learned cumulative density built from a monotone MLP, used as
// the fully factorized prior over hyper-latents.
class FactorizedPriorImpl : public torch::nn::Module {
 public:
  explicit FactorizedPriorImpl(int64_t channels, double init_scale = 10.0);

  // Unnormalized logits of the CDF at `v`, shape (C, 1, n).
  torch::Tensor logits_cumulative(const torch::Tensor& v) const;

  // Likelihood of each element of a (B, C, H, W) tensor under a unit-width bin.
  torch::Tensor likelihood(const torch::Tensor& v) const;

  int64_t channels() const { return channels_; }

 private:
  int64_t channels_;
  std::vector<torch::Tensor> matrices_;
  std::vector<torch::Tensor> biases_;
  std::vector<torch::Tensor> factors_;
};
TORCH_MODULE(FactorizedPrior);

// Bit totals for one batch. The per-sample tensors have shape (batch,) and
// keep the autograd graph so they can feed a loss directly.
struct RateReport {
  torch::Tensor bits_y;
  torch::Tensor bits_z;
  int64_t height = 0;
  int64_t width = 0;

  int64_t batch() const { return bits_y.size(0); }
  torch::Tensor total_bits() const { return bits_y + bits_z; }
  // Mean bits per pixel over the batch, as a differentiable scalar.
  torch::Tensor bpp() const;
  double bits_y_value() const;
  double bits_z_value() const;
  double bpp_value() const;
};

}  // namespace licbd
