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

#include "licbd/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "licbd/errors.hpp"

namespace licbd {
namespace {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::ConvTranspose2d up2(int64_t in, int64_t out) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

}  // namespace

torch::Tensor build_mask(const torch::Tensor& pred, int64_t source, int64_t dilation) {
  if (pred.dim() != 3) throw_shape("label map must be (B, H, W)");
  auto mask = (pred == source).to(torch::kFloat32).unsqueeze(1);
  for (int64_t i = 0; i < dilation; ++i) {
    mask = F::max_pool2d(mask, F::MaxPool2dFuncOptions(3).stride(1).padding(1));
  }
  return mask;
}

torch::Tensor build_target(const torch::Tensor& pred, int64_t source, int64_t target) {
  if (source == target) throw_config("segmentation attack needs source != target class");
  return torch::where(pred == source, torch::full_like(pred, target), pred);
}

torch::Tensor masked_poison(const torch::Tensor& x, const torch::Tensor& x_trig,
                            const torch::Tensor& mask) {
  if (x.sizes() != x_trig.sizes()) throw_shape("masked_poison: image shapes differ");
  if (mask.dim() != 4 || mask.size(0) != x.size(0) || mask.size(1) != 1 ||
      mask.size(2) != x.size(2) || mask.size(3) != x.size(3)) {
    throw_shape("masked_poison: mask must be (B, 1, H, W) matching the image");
  }
  const auto m = mask.to(x.scalar_type());
  return (1.0 - m) * x + m * x_trig;
}

void AsrAccumulator::add(const torch::Tensor& clean_pred, const torch::Tensor& poisoned_pred,
                         int64_t source, int64_t target) {
  if (clean_pred.sizes() != poisoned_pred.sizes()) throw_shape("ASR: prediction shapes differ");
  const auto src = clean_pred == source;
  converted_ += (src & (poisoned_pred == target)).sum().item<int64_t>();
  source_pixels_ += src.sum().item<int64_t>();
}

std::optional<double> AsrAccumulator::value() const {
  if (source_pixels_ == 0) return std::nullopt;
  return static_cast<double>(converted_) / static_cast<double>(source_pixels_);
}

std::optional<double> pixelwise_asr(const torch::Tensor& clean_pred,
                                    const torch::Tensor& poisoned_pred, int64_t source,
                                    int64_t target) {
  AsrAccumulator acc;
  acc.add(clean_pred, poisoned_pred, source, target);
  return acc.value();
}

SegmenterImpl::SegmenterImpl(SegmenterConfig config) : config_(config) {
  const auto w = config_.width;
  skip_ = conv3(3, w);
  down_ = nn::Sequential(conv3(w, 2 * w, 2), nn::ReLU(), conv3(2 * w, 2 * w), nn::ReLU(),
                         conv3(2 * w, 2 * w, 2), nn::ReLU());
  up_ = nn::Sequential(up2(2 * w, 2 * w), nn::ReLU(), up2(2 * w, w), nn::ReLU());
  head_ = nn::Conv2d(nn::Conv2dOptions(2 * w, config_.classes, 1));
  register_module("stem", skip_);
  register_module("down", down_);
  register_module("up", up_);
  register_module("head", head_);
}

torch::Tensor SegmenterImpl::forward(const torch::Tensor& x) {
  const auto f1 = torch::relu(skip_->forward(x));
  const auto u = up_->forward(down_->forward(f1));
  return head_->forward(torch::cat({u, f1}, 1));
}

torch::Tensor SegmenterImpl::predict(const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  return forward(x).argmax(1);
}

EmbedderImpl::EmbedderImpl(EmbedderConfig config) : config_(config) {
  const auto w = config_.width;
  body_ = nn::Sequential(conv3(3, w, 2), nn::ReLU(), conv3(w, 2 * w, 2), nn::ReLU(),
                         conv3(2 * w, 2 * w, 2), nn::ReLU(),
                         nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({4, 4})));
  proj_ = nn::Linear(2 * w * 16, config_.dim);
  register_module("body", body_);
  register_module("proj", proj_);
}

torch::Tensor EmbedderImpl::forward(const torch::Tensor& x) {
  return proj_->forward(body_->forward(x).flatten(1));
}

torch::Tensor EmbedderImpl::embed(const torch::Tensor& x) {
  const auto f = forward(x);
  const auto norms = f.norm(2, 1, /*keepdim=*/true);
  if ((norms.detach() <= 1e-12).any().item<bool>()) throw_numeric("zero-norm face embedding");
  return f / norms;
}

torch::Tensor cosine_similarity_checked(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.dim() != 2) throw_shape("cosine: expected matching (N, d)");
  const auto na = a.norm(2, 1);
  const auto nb = b.norm(2, 1);
  if ((na.detach() <= 1e-12).any().item<bool>() || (nb.detach() <= 1e-12).any().item<bool>()) {
    throw_numeric("zero-norm embedding in cosine similarity");
  }
  return (a * b).sum(1) / (na * nb);
}

double pixel_accuracy(Segmenter& model, const torch::Tensor& images, const torch::Tensor& labels) {
  torch::NoGradGuard no_grad;
  int64_t correct = 0;
  const int64_t n = images.size(0);
  for (int64_t i = 0; i < n; i += 32) {
    const auto end = std::min(n, i + 32);
    const auto pred = model->predict(images.slice(0, i, end));
    correct += (pred == labels.slice(0, i, end)).sum().item<int64_t>();
  }
  return static_cast<double>(correct) / static_cast<double>(labels.numel());
}

SegmenterTrainResult train_toy_segmenter(const torch::Tensor& images, const torch::Tensor& labels,
                                         SegmenterConfig config, DownstreamTrainConfig train,
                                         double val_fraction) {
  const int64_t n = images.size(0);
  if (n == 0 || labels.size(0) != n) throw_shape("segmenter training data mismatch");
  const int64_t n_val = std::clamp<int64_t>(static_cast<int64_t>(val_fraction * n), 1, n - 1);
  const int64_t n_train = n - n_val;
  const auto x_train = images.slice(0, 0, n_train);
  const auto y_train = labels.slice(0, 0, n_train);

  torch::manual_seed(train.seed);
  SegmenterTrainResult out;
  out.model = Segmenter(config);
  torch::optim::Adam opt(out.model->parameters(), torch::optim::AdamOptions(train.learning_rate));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(train.seed + 1);
  for (int64_t epoch = 0; epoch < train.epochs; ++epoch) {
    const auto perm = torch::randperm(n_train, gen, torch::kLong);
    for (int64_t i = 0; i < n_train; i += train.batch_size) {
      const auto idx = perm.slice(0, i, std::min(n_train, i + train.batch_size));
      opt.zero_grad();
      const auto logits = out.model->forward(x_train.index_select(0, idx));
      const auto loss = F::cross_entropy(logits, y_train.index_select(0, idx));
      loss.backward();
      opt.step();
    }
  }
  out.train_accuracy = pixel_accuracy(out.model, x_train, y_train);
  out.val_accuracy =
      pixel_accuracy(out.model, images.slice(0, n_train, n), labels.slice(0, n_train, n));
  return out;
}

EmbedderTrainResult train_toy_embedder(const torch::Tensor& images, const torch::Tensor& identities,
                                       EmbedderConfig config, DownstreamTrainConfig train,
                                       double margin, double scale) {
  const int64_t n = images.size(0);
  if (n == 0 || identities.size(0) != n) throw_shape("embedder training data mismatch");
  const int64_t classes = identities.max().item<int64_t>() + 1;

  torch::manual_seed(train.seed);
  EmbedderTrainResult out;
  out.model = Embedder(config);
  auto class_weights = torch::randn({classes, config.dim}).requires_grad_(true);
  auto params = out.model->parameters();
  params.push_back(class_weights);
  torch::optim::Adam opt(params, torch::optim::AdamOptions(train.learning_rate));
  auto gen = at::make_generator<at::CPUGeneratorImpl>(train.seed + 1);
  for (int64_t epoch = 0; epoch < train.epochs; ++epoch) {
    const auto perm = torch::randperm(n, gen, torch::kLong);
    for (int64_t i = 0; i < n; i += train.batch_size) {
      const auto idx = perm.slice(0, i, std::min(n, i + train.batch_size));
      opt.zero_grad();
      const auto emb = out.model->embed(images.index_select(0, idx));
      const auto w = class_weights / class_weights.norm(2, 1, true);
      const auto target = identities.index_select(0, idx);
      const auto cos = torch::matmul(emb, w.t());
      const auto onehot = F::one_hot(target, classes).to(cos.scalar_type());
      const auto loss = F::cross_entropy(scale * (cos - margin * onehot), target);
      loss.backward();
      opt.step();
    }
  }

  torch::NoGradGuard no_grad;
  const auto emb = out.model->embed(images);
  const auto sim = torch::matmul(emb, emb.t());
  const auto same = identities.unsqueeze(0) == identities.unsqueeze(1);
  const auto off_diag = ~torch::eye(n, torch::kBool);
  out.same_identity_cosine = sim.masked_select(same & off_diag).mean().item<double>();
  out.different_identity_cosine = sim.masked_select(~same).mean().item<double>();
  return out;
}

double face_match_accuracy(const torch::Tensor& cosines, double threshold) {
  if (cosines.numel() == 0) throw Error(ErrorKind::kDataset, "empty face pair set");
  return (cosines > threshold).to(torch::kFloat64).mean().item<double>();
}

double face_match_accuracy(const torch::Tensor& a, const torch::Tensor& b, Embedder& model,
                           double threshold) {
  if (a.size(0) == 0) throw Error(ErrorKind::kDataset, "empty face pair set");
  torch::NoGradGuard no_grad;
  return face_match_accuracy(cosine_similarity_checked(model->embed(a), model->embed(b)),
                             threshold);
}

double calibrate_match_threshold(const torch::Tensor& genuine_cosines, double accept_fraction) {
  if (genuine_cosines.numel() == 0) throw Error(ErrorKind::kDataset, "no genuine pairs");
  const auto sorted = std::get<0>(torch::sort(genuine_cosines.flatten().to(torch::kFloat64)));
  const auto n = sorted.numel();
  auto q = static_cast<int64_t>(std::floor((1.0 - accept_fraction) * static_cast<double>(n)));
  q = std::clamp<int64_t>(q, 0, n - 1);
  return sorted[q].item<double>() - 1e-6;
}

}  // namespace licbd
