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

#include "licbd/entropy.hpp"

#include <cmath>
#include <string>

#include "licbd/errors.hpp"

namespace licbd {

torch::Tensor round_half_away(const torch::Tensor& v) {
  return torch::sign(v) * torch::floor(torch::abs(v) + 0.5);
}

torch::Tensor quantize(const torch::Tensor& v, QuantMode mode,
                       std::optional<torch::Generator> gen) {
  if (mode == QuantMode::kEvalRound) {
    return round_half_away(v);
  }
  auto u = torch::rand(v.sizes(), gen, v.options().requires_grad(false)) - 0.5;
  return v + u;
}

torch::Tensor bits_from_likelihoods(const torch::Tensor& likelihoods) {
  const auto finite = torch::isfinite(likelihoods.detach());
  if (!finite.all().item<bool>()) {
    const auto bad = torch::nonzero(~finite.flatten());
    const auto index = bad[0][0].item<int64_t>();
    throw_numeric("non-finite likelihood at flat index " + std::to_string(index));
  }
  return -torch::log2(likelihoods.clamp_min(kLikelihoodFloor));
}

torch::Tensor standard_normal_cdf(const torch::Tensor& t) {
  return 0.5 * torch::erfc(-t * M_SQRT1_2);
}

torch::Tensor gaussian_likelihood(const torch::Tensor& v, const torch::Tensor& mean,
                                  const torch::Tensor& scale) {
  const auto s = scale.clamp_min(kScaleFloor);
  // Symmetric about the mean: evaluate in the lower tail for accuracy.
  const auto d = torch::abs(v - mean);
  const auto upper = standard_normal_cdf((0.5 - d) / s);
  const auto lower = standard_normal_cdf((-0.5 - d) / s);
  return upper - lower;
}

FactorizedPriorImpl::FactorizedPriorImpl(int64_t channels, double init_scale)
    : channels_(channels) {
  const std::vector<int64_t> filters = {1, 3, 3, 3, 1};
  const double scale = std::pow(init_scale, 1.0 / static_cast<double>(filters.size() - 1));
  for (size_t i = 0; i + 1 < filters.size(); ++i) {
    const auto in = filters[i];
    const auto out = filters[i + 1];
    const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(out)));
    matrices_.push_back(register_parameter("matrix" + std::to_string(i),
                                           torch::full({channels, out, in}, init)));
    biases_.push_back(register_parameter("bias" + std::to_string(i),
                                         torch::rand({channels, out, 1}) - 0.5));
    if (i + 2 < filters.size()) {
      factors_.push_back(register_parameter("factor" + std::to_string(i),
                                            torch::zeros({channels, out, 1})));
    }
  }
}

torch::Tensor FactorizedPriorImpl::logits_cumulative(const torch::Tensor& v) const {
  auto logits = v;
  for (size_t i = 0; i < matrices_.size(); ++i) {
    logits = torch::matmul(torch::softplus(matrices_[i]), logits) + biases_[i];
    if (i < factors_.size()) {
      logits = logits + torch::tanh(factors_[i]) * torch::tanh(logits);
    }
  }
  return logits;
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& v) const {
  if (v.dim() != 4 || v.size(1) != channels_) {
    throw_shape("factorized prior expects (B, " + std::to_string(channels_) + ", H, W)");
  }
  const auto perm = v.permute({1, 0, 2, 3}).reshape({channels_, 1, -1});
  const auto lower = logits_cumulative(perm - 0.5);
  const auto upper = logits_cumulative(perm + 0.5);
  // Flip to the side where the sigmoid is not saturated.
  const auto sign = torch::where((lower + upper).detach() > 0, -1.0, 1.0).to(v.dtype());
  const auto lik = torch::abs(torch::sigmoid(sign * upper) - torch::sigmoid(sign * lower));
  return lik.reshape({channels_, v.size(0), v.size(2), v.size(3)}).permute({1, 0, 2, 3});
}

torch::Tensor RateReport::bpp() const {
  return total_bits().sum() / static_cast<double>(batch() * height * width);
}

double RateReport::bits_y_value() const { return bits_y.sum().item<double>(); }
double RateReport::bits_z_value() const { return bits_z.sum().item<double>(); }
double RateReport::bpp_value() const { return bpp().item<double>(); }

}  // namespace licbd
