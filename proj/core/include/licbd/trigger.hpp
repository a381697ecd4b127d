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

#include "licbd/dct.hpp"

namespace licbd {

struct TriggerConfig {
  int64_t block = 16;  // B
  int64_t top_k = 16;  // K
  int64_t band = 64;   // N
  double epsilon = 0.005;
  bool use_topk = true;
  bool use_patch_weights = true;
  int64_t weight_net_channels = 16;

  // Throws a config error unless 0 < K <= N <= B^2 - 1.
  void validate() const;
};

struct PoisonedImage {
  torch::Tensor x_p;
  torch::Tensor source;
  double measured_mse = 0.0;  // mean((x_p - source)^2), computed on x_p as stored
};

enum class ClipMode { kNone, kClip };

// Adaptive frequency trigger T(x): a sparse general trigger over the middle
// DCT band (local feature) scaled per block and channel by weights predicted
// from the whole image (global feature), added to every block's spectrum.
class TriggerGeneratorImpl : public torch::nn::Module {
 public:
  explicit TriggerGeneratorImpl(TriggerConfig config = {});

  // Effective general trigger (3, N): g_raw masked to its K largest
  // magnitudes per channel. The mask is constant in the backward pass.
  torch::Tensor general_trigger() const;
  torch::Tensor topk_mask() const;

  // Positive per-block, per-channel weights (B, 3, nh, nw).
  torch::Tensor patch_weights(const torch::Tensor& x);

  // Spectral trigger t = g * w laid out as (B, 3, nh, nw, block, block).
  torch::Tensor trigger_spectrum(const torch::Tensor& weights) const;

  // Training uses ClipMode::kNone; clipping to [0, 1] is an inference step.
  PoisonedImage inject(const torch::Tensor& x, ClipMode clip = ClipMode::kNone);
  torch::Tensor forward(const torch::Tensor& x) { return inject(x).x_p; }

  const TriggerConfig& config() const { return config_; }
  const std::vector<FreqIndex>& band_indices() const { return band_; }
  torch::Tensor g_raw() const { return g_raw_; }
  torch::nn::Sequential weight_features() const { return features_; }
  torch::nn::Conv2d weight_head() const { return head_; }

 private:
  TriggerConfig config_;
  std::vector<FreqIndex> band_;
  torch::Tensor band_flat_;
  torch::Tensor g_raw_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(TriggerGenerator);

// Trigger scaled by `factor` around the clean image, clipped to [0, 1].
struct AmplifiedImage {
  PoisonedImage poisoned;
  double unclipped_mse = 0.0;
  double budget = 0.0;  // factor^2 * epsilon^2
};
AmplifiedImage amplify(const torch::Tensor& x, TriggerGenerator& trigger, double factor);

// Spatial-domain baseline: an encoder-decoder U produces a residual that is
// normalized to unit mean square per image and scaled by epsilon.
class BaselineTriggerImpl : public torch::nn::Module {
 public:
  explicit BaselineTriggerImpl(double epsilon = 0.005, int64_t channels = 16);

  torch::Tensor residual(const torch::Tensor& x);
  PoisonedImage inject(const torch::Tensor& x, ClipMode clip = ClipMode::kNone);

  double epsilon() const { return epsilon_; }
  void set_epsilon(double epsilon) { epsilon_ = epsilon; }

 private:
  double epsilon_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(BaselineTrigger);

double mean_squared_error(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace licbd
