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
#include <vector>

namespace licbd {

// Class ids of the toy street scenes.
enum SceneClass : int64_t {
  kRoad = 0,
  kCar = 1,
  kBuilding = 2,
  kVegetation = 3,
};
inline constexpr int64_t kSceneClasses = 4;

// M[pred == source], dilated by a (2r+1)x(2r+1) square `dilation` times.
// Returns a float {0, 1} tensor of shape (B, 1, H, W).
torch::Tensor build_mask(const torch::Tensor& pred, int64_t source, int64_t dilation = 1);

// Copy of pred with every `source` label replaced by `target`.
torch::Tensor build_target(const torch::Tensor& pred, int64_t source, int64_t target);

// (1 - M) * x + M * x_trig, broadcasting M over channels.
torch::Tensor masked_poison(const torch::Tensor& x, const torch::Tensor& x_trig,
                            const torch::Tensor& mask);

// Pooled pixel-wise attack success rate: converted source pixels over clean
// source pixels, summed across every batch added.
class AsrAccumulator {
 public:
  void add(const torch::Tensor& clean_pred, const torch::Tensor& poisoned_pred, int64_t source,
           int64_t target);
  // Empty when no clean pixel was predicted as the source class.
  std::optional<double> value() const;
  int64_t converted() const { return converted_; }
  int64_t source_pixels() const { return source_pixels_; }

 private:
  int64_t converted_ = 0;
  int64_t source_pixels_ = 0;
};

std::optional<double> pixelwise_asr(const torch::Tensor& clean_pred,
                                    const torch::Tensor& poisoned_pred, int64_t source,
                                    int64_t target);

struct SegmenterConfig {
  int64_t classes = kSceneClasses;
  int64_t width = 16;
};

// Small encoder-decoder producing per-pixel class logits.
class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(SegmenterConfig config = {});
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor predict(const torch::Tensor& x);
  const SegmenterConfig& config() const { return config_; }

 private:
  SegmenterConfig config_;
  torch::nn::Sequential down_{nullptr};
  torch::nn::Sequential up_{nullptr};
  torch::nn::Conv2d skip_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Segmenter);

struct EmbedderConfig {
  int64_t dim = 32;
  int64_t width = 16;
};

// Small CNN face embedder. forward() returns raw features; embed() returns
// unit vectors.
class EmbedderImpl : public torch::nn::Module {
 public:
  explicit EmbedderImpl(EmbedderConfig config = {});
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor embed(const torch::Tensor& x);
  const EmbedderConfig& config() const { return config_; }

 private:
  EmbedderConfig config_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear proj_{nullptr};
};
TORCH_MODULE(Embedder);

// Row-wise cosine similarity; throws a numeric error on a zero-norm row.
torch::Tensor cosine_similarity_checked(const torch::Tensor& a, const torch::Tensor& b);

struct DownstreamTrainConfig {
  int64_t epochs = 20;
  int64_t batch_size = 16;
  double learning_rate = 2e-3;
  uint64_t seed = 0;
};

struct SegmenterTrainResult {
  Segmenter model{nullptr};
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

// images (N, 3, H, W) in [0,1]; labels (N, H, W) int64. The last
// `val_fraction` of samples is held out for the reported accuracy.
SegmenterTrainResult train_toy_segmenter(const torch::Tensor& images, const torch::Tensor& labels,
                                         SegmenterConfig config, DownstreamTrainConfig train,
                                         double val_fraction = 0.2);

double pixel_accuracy(Segmenter& model, const torch::Tensor& images, const torch::Tensor& labels);

struct EmbedderTrainResult {
  Embedder model{nullptr};
  double same_identity_cosine = 0.0;
  double different_identity_cosine = 0.0;
};

// Trained as a normalized classifier with an additive cosine margin.
EmbedderTrainResult train_toy_embedder(const torch::Tensor& images, const torch::Tensor& identities,
                                       EmbedderConfig config, DownstreamTrainConfig train,
                                       double margin = 0.3, double scale = 16.0);

// Fraction of pairs (a[i], b[i]) whose embedding cosine exceeds `threshold`.
double face_match_accuracy(const torch::Tensor& a, const torch::Tensor& b, Embedder& model,
                           double threshold);
double face_match_accuracy(const torch::Tensor& cosines, double threshold);

// Threshold admitting `accept_fraction` of the given genuine-pair cosines.
double calibrate_match_threshold(const torch::Tensor& genuine_cosines,
                                 double accept_fraction = 0.95);

}  // namespace licbd
