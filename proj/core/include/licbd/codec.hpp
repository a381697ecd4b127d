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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "licbd/entropy.hpp"

namespace licbd {

// RD weights for quality indices 1..8 (distortion measured on the 8-bit scale).
inline constexpr std::array<double, 8> kQualityLambdas = {0.0018, 0.0035, 0.0067, 0.0130,
                                                          0.0250, 0.0483, 0.0932, 0.1800};
double lambda_for_quality(int quality);

enum class Activation { kGdn, kRelu, kNone };

struct CodecConfig {
  int64_t hidden_channels = 128;
  int64_t latent_channels = 128;  // C_y
  int64_t hyper_channels = 64;    // C_z
  int64_t stages = 4;             // stride-2 stages in the analysis transform
  int64_t kernel = 5;
  Activation activation = Activation::kGdn;
  int quality = 3;
  double lambda = 0.0067;

  int64_t stride() const { return int64_t{1} << stages; }
  // Stable textual description of the architecture; hashed into checkpoints.
  std::string architecture_string() const;
  std::string architecture_hash() const;
};

enum class Partition { kEncoder, kDecoder, kEntropy };

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct ForwardResult {
  torch::Tensor x_hat;
  torch::Tensor y;
  torch::Tensor z;
  torch::Tensor y_hat;
  torch::Tensor z_hat;
  torch::Tensor means;
  torch::Tensor scales;
  RateReport rates;
};

struct RDLoss {
  torch::Tensor total;
  torch::Tensor rate;        // bits per pixel
  torch::Tensor distortion;  // 255^2 * MSE
  double lambda = 0.0;
};

// Distortion term D used in every loss: mean squared error on the 8-bit scale.
torch::Tensor distortion(const torch::Tensor& x, const torch::Tensor& x_hat);

// Throws a shape error unless x is (B, 3, H, W) with H, W multiples of `stride`.
void validate_image_batch(const torch::Tensor& x, int64_t stride);

// Hyperprior codec: analysis g_a, synthesis g_s, hyper analysis h_a, hyper
// synthesis h_s, and a factorized prior over z. The encoder partition holds
// g_a and h_a (everything that runs before the bitstream); the decoder holds
// g_s; the entropy partition holds h_s and the factorized prior, which the
// receiver needs to parse the stream.
class HyperpriorCodecImpl : public torch::nn::Module {
 public:
  explicit HyperpriorCodecImpl(CodecConfig config = {});

  torch::Tensor encode(const torch::Tensor& x);
  torch::Tensor hyper_encode(const torch::Tensor& y);
  torch::Tensor decode(const torch::Tensor& y_hat);
  // (means, scales) for y, cropped to the latent grid (h, w).
  std::pair<torch::Tensor, torch::Tensor> hyper_decode(const torch::Tensor& z_hat, int64_t h,
                                                       int64_t w);

  RateReport rate_estimate(const torch::Tensor& y_hat, const torch::Tensor& z_hat,
                           int64_t image_height, int64_t image_width);

  ForwardResult forward(const torch::Tensor& x, QuantMode mode,
                        std::optional<torch::Generator> gen = std::nullopt);

  RDLoss rd_loss(const torch::Tensor& x, std::optional<torch::Generator> gen = std::nullopt);
  RDLoss rd_loss_from(const torch::Tensor& x, const ForwardResult& result) const;

  NamedTensors partition_parameters(Partition part);
  std::vector<torch::Tensor> partition_tensors(Partition part);
  void set_trainable(Partition part, bool trainable);

  const CodecConfig& config() const { return config_; }
  double lambda() const { return config_.lambda; }

  torch::nn::Sequential analysis() const { return analysis_; }
  torch::nn::Sequential synthesis() const { return synthesis_; }
  torch::nn::Sequential hyper_analysis() const { return hyper_analysis_; }
  torch::nn::Sequential hyper_synthesis() const { return hyper_synthesis_; }
  FactorizedPrior prior() const { return prior_; }

 private:
  CodecConfig config_;
  torch::nn::Sequential analysis_{nullptr};
  torch::nn::Sequential synthesis_{nullptr};
  torch::nn::Sequential hyper_analysis_{nullptr};
  torch::nn::Sequential hyper_synthesis_{nullptr};
  FactorizedPrior prior_{nullptr};
};
TORCH_MODULE(HyperpriorCodec);

// Deep copies of every parameter, keyed by name.
std::map<std::string, torch::Tensor> snapshot_parameters(torch::nn::Module& module);
void restore_parameters(torch::nn::Module& module,
                        const std::map<std::string, torch::Tensor>& snapshot);

}  // namespace licbd
