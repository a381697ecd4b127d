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
#include <memory>
#include <optional>
#include <string>

#include "licbd/codec.hpp"
#include "licbd/downstream.hpp"
#include "licbd/trigger.hpp"

namespace licbd {

enum class ObjectiveKind { kBpp, kPsnr, kSegTargeted, kFaceDeid };
enum class LossVariant { kStatic, kDynamic };

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& name);

inline constexpr double kDefaultGamma = 1e4;
inline constexpr double kDefaultEpsilon = 0.005;
inline constexpr double kPsnrCap = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

struct AttackObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kBpp;
  double alpha = 1.0;
  double beta = 0.01;
  double gamma = kDefaultGamma;
  double epsilon = kDefaultEpsilon;
  LossVariant variant = LossVariant::kDynamic;
  std::string aux_dataset;
  int64_t source_class = kCar;
  int64_t target_class = kRoad;

  // Default hyperparameters per objective kind.
  static AttackObjectiveSpec defaults_for(ObjectiveKind kind);
  void validate() const;
};

// Every component is a scalar tensor; `objective` is the attack loss and
// `total = objective + stealth_penalty`. Components that an objective does
// not use are zero.
struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor objective;
  torch::Tensor clean_rate;
  torch::Tensor clean_distortion;
  torch::Tensor poisoned_rate;
  torch::Tensor poisoned_distortion;
  torch::Tensor poisoned_psnr;
  torch::Tensor downstream_term;
  torch::Tensor stealth_penalty;
  int64_t skipped_samples = 0;
  double trigger_mse = 0.0;  // MSE(x, x_p) before the hinge
};

// max(a, b) whose gradient goes entirely to the selected argument; ties pick a.
torch::Tensor max_first(const torch::Tensor& a, const torch::Tensor& b);

// gamma * max(MSE(x, x_p), epsilon^2).
torch::Tensor stealth_hinge(const torch::Tensor& x, const torch::Tensor& x_p, double gamma,
                            double epsilon);

// Mean per-image PSNR in dB on unclamped data, MSE floored at 1e-10 and
// capped at 100 dB. Used as the D_P distortion in PSNR attacks.
torch::Tensor psnr_loss_term(const torch::Tensor& reference, const torch::Tensor& output);

// Formula layer: combine already-computed components. Inputs are scalar
// tensors so gradients flow through the combination unchanged.
LossBreakdown combine_bpp_static(const torch::Tensor& clean_rate,
                                 const torch::Tensor& clean_distortion,
                                 const torch::Tensor& poisoned_distortion,
                                 const torch::Tensor& poisoned_rate, double alpha, double beta,
                                 double lambda);
LossBreakdown combine_bpp_dynamic(const torch::Tensor& clean_rate,
                                  const torch::Tensor& clean_distortion,
                                  const torch::Tensor& poisoned_distortion,
                                  const torch::Tensor& poisoned_rate, double beta, double lambda);
LossBreakdown combine_psnr_static(const torch::Tensor& clean_rate,
                                  const torch::Tensor& clean_distortion,
                                  const torch::Tensor& poisoned_rate,
                                  const torch::Tensor& poisoned_psnr, double alpha, double beta,
                                  double lambda);
LossBreakdown combine_psnr_dynamic(const torch::Tensor& clean_rate,
                                   const torch::Tensor& clean_distortion,
                                   const torch::Tensor& poisoned_rate,
                                   const torch::Tensor& poisoned_psnr, double beta, double lambda);

// Model layer: run clean and poisoned batches through the codec (training
// quantization) and combine. The stealth hinge uses the given gamma/epsilon.
LossBreakdown loss_bpp_static(const torch::Tensor& x, HyperpriorCodec& codec,
                              TriggerGenerator& trigger, double alpha, double beta,
                              std::optional<torch::Generator> gen = std::nullopt,
                              double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);
LossBreakdown loss_bpp_dynamic(const torch::Tensor& x, HyperpriorCodec& codec,
                               TriggerGenerator& trigger, double beta,
                               std::optional<torch::Generator> gen = std::nullopt,
                               double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);
LossBreakdown loss_psnr_static(const torch::Tensor& x, HyperpriorCodec& codec,
                               TriggerGenerator& trigger, double alpha, double beta,
                               std::optional<torch::Generator> gen = std::nullopt,
                               double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);
LossBreakdown loss_psnr_dynamic(const torch::Tensor& x, HyperpriorCodec& codec,
                                TriggerGenerator& trigger, double beta,
                                std::optional<torch::Generator> gen = std::nullopt,
                                double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);

// Task-specific L_DS(eta, g(f(T(x)))) for the generic downstream objective.
class DownstreamAdapter {
 public:
  virtual ~DownstreamAdapter() = default;
  // Attack target derived from the clean input (e.g. relabelled segmentation).
  virtual torch::Tensor target(const torch::Tensor& x_clean) = 0;
  virtual torch::Tensor task_loss(const torch::Tensor& target,
                                  const torch::Tensor& attacked_output) = 0;
};

class SegmentationAdapter : public DownstreamAdapter {
 public:
  SegmentationAdapter(Segmenter model, int64_t source, int64_t target);
  torch::Tensor target(const torch::Tensor& x_clean) override;
  torch::Tensor task_loss(const torch::Tensor& target,
                          const torch::Tensor& attacked_output) override;

 private:
  Segmenter model_;
  int64_t source_;
  int64_t target_;
};

// sum_{D_m} L(x) + sum_{D_a} [alpha L(T(x)) + beta L_DS(eta, g(f(T(x))))].
LossBreakdown loss_downstream(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                              HyperpriorCodec& codec, TriggerGenerator& trigger,
                              DownstreamAdapter* adapter, double alpha, double beta,
                              std::optional<torch::Generator> gen = std::nullopt,
                              double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);

// Targeted segmentation attack restricted to the (dilated) source-class
// region predicted on the clean image. Samples with an empty mask contribute
// no cross-entropy and are counted in `skipped_samples`.
LossBreakdown loss_segmentation(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                                HyperpriorCodec& codec, TriggerGenerator& trigger,
                                Segmenter& seg_model, int64_t source, int64_t target,
                                double alpha, double beta, int64_t mask_dilation = 1,
                                std::optional<torch::Generator> gen = std::nullopt,
                                double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);

// Face de-identification: beta * cos(g(f(x)), g(f(T(x)))) pushes the attacked
// output's embedding away from the clean output's embedding.
LossBreakdown loss_face(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                        HyperpriorCodec& codec, TriggerGenerator& trigger, Embedder& embed_model,
                        double alpha, double beta,
                        std::optional<torch::Generator> gen = std::nullopt,
                        double gamma = kDefaultGamma, double epsilon = kDefaultEpsilon);

}  // namespace licbd
