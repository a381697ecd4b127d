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

#include "licbd/gdn.hpp"

namespace licbd {
namespace {

constexpr double kPedestal = 1.0 / (1 << 18) / (1 << 18);
constexpr double kBetaMin = 1e-6;

}  // namespace

GDNImpl::GDNImpl(int64_t channels, bool inverse) : channels_(channels), inverse_(inverse) {
  beta_raw_ = register_parameter("beta", torch::sqrt(torch::ones({channels}) + kPedestal));
  gamma_raw_ = register_parameter(
      "gamma", torch::sqrt(0.1 * torch::eye(channels) + kPedestal));
}

torch::Tensor GDNImpl::effective_beta() const {
  return (beta_raw_ * beta_raw_ - kPedestal).clamp_min(kBetaMin);
}

torch::Tensor GDNImpl::effective_gamma() const {
  return (gamma_raw_ * gamma_raw_ - kPedestal).clamp_min(0.0);
}

torch::Tensor GDNImpl::forward(const torch::Tensor& x) {
  const auto gamma = effective_gamma().view({channels_, channels_, 1, 1});
  const auto norm = torch::conv2d(x * x, gamma, effective_beta());
  return inverse_ ? x * torch::sqrt(norm) : x * torch::rsqrt(norm);
}

}  // namespace licbd
