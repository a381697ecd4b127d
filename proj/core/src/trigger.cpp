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

#include "licbd/trigger.hpp"

#include <string>

#include "licbd/errors.hpp"

namespace licbd {
namespace {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

int64_t blocks_along(int64_t size, int64_t block) { return (size + block - 1) / block; }

}  // namespace

void TriggerConfig::validate() const {
  if (block <= 0) throw_config("trigger block size must be positive");
  if (!(0 < top_k && top_k <= band && band <= block * block - 1)) {
    throw_config("trigger requires 0 < K <= N <= B^2 - 1 (K=" + std::to_string(top_k) +
                 ", N=" + std::to_string(band) + ", B=" + std::to_string(block) + ")");
  }
  if (!(epsilon >= 0.0)) throw_config("trigger epsilon must be nonnegative");
}

double mean_squared_error(const torch::Tensor& a, const torch::Tensor& b) {
  return torch::mean(torch::square(a.detach() - b.detach())).item<double>();
}

TriggerGeneratorImpl::TriggerGeneratorImpl(TriggerConfig config) : config_(config) {
  config_.validate();
  band_ = middle_band(config_.block, config_.band);
  std::vector<int64_t> flat;
  flat.reserve(band_.size());
  for (const auto& f : band_) flat.push_back(f.u * config_.block + f.v);
  band_flat_ = torch::tensor(flat, torch::kLong);

  g_raw_ = register_parameter("g_raw", 0.02 * torch::randn({3, config_.band}));

  const auto c = config_.weight_net_channels;
  features_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(3, c, 3).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(c, c, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(c, c, 3).padding(1)), nn::ReLU());
  head_ = nn::Conv2d(nn::Conv2dOptions(2 * c, 3, 1));
  {
    torch::NoGradGuard no_grad;
    head_->weight.zero_();
    head_->bias.zero_();
  }
  register_module("features", features_);
  register_module("head", head_);
}

torch::Tensor TriggerGeneratorImpl::topk_mask() const {
  if (!config_.use_topk || config_.top_k == config_.band) {
    return torch::ones_like(g_raw_).detach();
  }
  // Stable descending sort keeps the lower zigzag index first on ties.
  const auto order = std::get<1>(
      torch::sort(torch::abs(g_raw_.detach()), /*stable=*/true, /*dim=*/1, /*descending=*/true));
  auto mask = torch::zeros_like(g_raw_).detach();
  mask.scatter_(1, order.slice(1, 0, config_.top_k), 1.0);
  return mask;
}

torch::Tensor TriggerGeneratorImpl::general_trigger() const { return g_raw_ * topk_mask(); }

torch::Tensor TriggerGeneratorImpl::patch_weights(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw_shape("patch_weights expects (B, 3, H, W)");
  const int64_t nh = blocks_along(x.size(2), config_.block);
  const int64_t nw = blocks_along(x.size(3), config_.block);
  if (!config_.use_patch_weights) {
    return torch::ones({x.size(0), 3, nh, nw}, x.options().requires_grad(false));
  }
  const auto feat = features_->forward(x);
  const auto local = F::adaptive_avg_pool2d(feat, F::AdaptiveAvgPool2dFuncOptions({nh, nw}));
  const auto global = feat.mean({2, 3}, /*keepdim=*/true).expand_as(local);
  return torch::softplus(head_->forward(torch::cat({local, global}, 1)));
}

torch::Tensor TriggerGeneratorImpl::trigger_spectrum(const torch::Tensor& weights) const {
  const int64_t b2 = config_.block * config_.block;
  const auto g = general_trigger().to(weights.scalar_type());
  const auto dense =
      torch::zeros({3, b2}, g.options()).index_copy(1, band_flat_.to(g.device()), g);
  const auto t = weights.unsqueeze(-1) * dense.view({1, 3, 1, 1, b2});
  return t.view({weights.size(0), 3, weights.size(2), weights.size(3), config_.block,
                 config_.block});
}

PoisonedImage TriggerGeneratorImpl::inject(const torch::Tensor& x, ClipMode clip) {
  auto spectrum = block_dct(x, config_.block);
  spectrum.coeffs = spectrum.coeffs + trigger_spectrum(patch_weights(x));
  PoisonedImage out;
  out.x_p = block_idct(spectrum);
  if (clip == ClipMode::kClip) out.x_p = out.x_p.clamp(0.0, 1.0);
  out.source = x;
  out.measured_mse = mean_squared_error(out.x_p, x);
  return out;
}

AmplifiedImage amplify(const torch::Tensor& x, TriggerGenerator& trigger, double factor) {
  if (!(factor >= 1.0)) throw_config("amplification factor must be >= 1");
  const auto raw = trigger->inject(x, ClipMode::kNone).x_p;
  const auto unclipped = x + factor * (raw - x);
  AmplifiedImage out;
  out.unclipped_mse = mean_squared_error(unclipped, x);
  out.poisoned.x_p = unclipped.clamp(0.0, 1.0);
  out.poisoned.source = x;
  out.poisoned.measured_mse = mean_squared_error(out.poisoned.x_p, x);
  const double eps = trigger->config().epsilon;
  out.budget = factor * factor * eps * eps;
  return out;
}

BaselineTriggerImpl::BaselineTriggerImpl(double epsilon, int64_t channels) : epsilon_(epsilon) {
  net_ = nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(3, channels, 3).stride(2).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)), nn::ReLU(),
      nn::ConvTranspose2d(
          nn::ConvTranspose2dOptions(channels, 3, 3).stride(2).padding(1).output_padding(1)));
  register_module("net", net_);
}

torch::Tensor BaselineTriggerImpl::residual(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw_shape("baseline trigger expects (B, 3, H, W)");
  auto r = net_->forward(x);
  return r.slice(2, 0, x.size(2)).slice(3, 0, x.size(3));
}

PoisonedImage BaselineTriggerImpl::inject(const torch::Tensor& x, ClipMode clip) {
  const auto r = residual(x);
  const auto rms = torch::sqrt(torch::square(r).mean({1, 2, 3}, /*keepdim=*/true));
  // Images with an all-zero residual pass through unchanged.
  const auto safe = torch::where(rms > 0, rms, torch::ones_like(rms));
  const auto scaled = torch::where(rms > 0, r / safe, torch::zeros_like(r)) * epsilon_;
  PoisonedImage out;
  out.x_p = x + scaled;
  if (clip == ClipMode::kClip) out.x_p = out.x_p.clamp(0.0, 1.0);
  out.source = x;
  out.measured_mse = mean_squared_error(out.x_p, x);
  return out;
}

}  // namespace licbd
