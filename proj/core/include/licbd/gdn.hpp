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

namespace licbd {

// Generalized divisive normalization (inverse=false) and its approximate
// inverse (inverse=true). beta and gamma are stored as square roots with a
// small pedestal so both stay nonnegative under unconstrained updates.
class GDNImpl : public torch::nn::Module {
 public:
  GDNImpl(int64_t channels, bool inverse);

  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor effective_beta() const;
  torch::Tensor effective_gamma() const;

 private:
  int64_t channels_;
  bool inverse_;
  torch::Tensor beta_raw_;
  torch::Tensor gamma_raw_;
};
TORCH_MODULE(GDN);

}  // namespace licbd
