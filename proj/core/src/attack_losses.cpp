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

#include "licbd/attack_losses.hpp"

#include "licbd/errors.hpp"

namespace licbd {
namespace {

namespace F = torch::nn::functional;

torch::Tensor zero_like_scalar(const torch::Tensor& ref) { return torch::zeros({}, ref.options()); }

LossBreakdown blank(const torch::Tensor& ref) {
  LossBreakdown b;
  const auto z = zero_like_scalar(ref);
  b.total = z;
  b.objective = z;
  b.clean_rate = z;
  b.clean_distortion = z;
  b.poisoned_rate = z;
  b.poisoned_distortion = z;
  b.poisoned_psnr = z;
  b.downstream_term = z;
  b.stealth_penalty = z;
  return b;
}

void finish(LossBreakdown& b) { b.total = b.objective + b.stealth_penalty; }

struct PairedPass {
  PoisonedImage poisoned;
  ForwardResult clean;
  ForwardResult attacked;
};

PairedPass run_pair(const torch::Tensor& x, HyperpriorCodec& codec, TriggerGenerator& trigger,
                    std::optional<torch::Generator> gen) {
  PairedPass p;
  p.poisoned = trigger->inject(x, ClipMode::kNone);
  p.clean = codec->forward(x, QuantMode::kTrainNoise, gen);
  p.attacked = codec->forward(p.poisoned.x_p, QuantMode::kTrainNoise, gen);
  return p;
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kBpp: return "bpp";
    case ObjectiveKind::kPsnr: return "psnr";
    case ObjectiveKind::kSegTargeted: return "seg";
    case ObjectiveKind::kFaceDeid: return "face";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "bpp") return ObjectiveKind::kBpp;
  if (name == "psnr") return ObjectiveKind::kPsnr;
  if (name == "seg") return ObjectiveKind::kSegTargeted;
  if (name == "face") return ObjectiveKind::kFaceDeid;
  throw_config("unknown objective '" + name + "' (expected bpp|psnr|seg|face)");
}

AttackObjectiveSpec AttackObjectiveSpec::defaults_for(ObjectiveKind kind) {
  AttackObjectiveSpec s;
  s.kind = kind;
  switch (kind) {
    case ObjectiveKind::kBpp:
      s.alpha = 1.0;
      s.beta = 0.01;
      break;
    case ObjectiveKind::kPsnr:
      s.alpha = 0.1;
      s.beta = 0.1;
      break;
    case ObjectiveKind::kSegTargeted:
      s.alpha = 0.1;
      s.beta = 0.2;
      break;
    case ObjectiveKind::kFaceDeid:
      s.alpha = 0.1;
      s.beta = 0.05;
      break;
  }
  return s;
}

void AttackObjectiveSpec::validate() const {
  if (!(beta > 0.0)) throw_config("objective beta must be > 0");
  if (!(gamma > 0.0)) throw_config("objective gamma must be > 0");
  if (!(epsilon > 0.0)) throw_config("objective epsilon must be > 0");
  const bool uses_alpha = variant == LossVariant::kStatic || kind == ObjectiveKind::kSegTargeted ||
                          kind == ObjectiveKind::kFaceDeid;
  if (uses_alpha && !(alpha > 0.0)) throw_config("objective alpha must be > 0");
  if (kind == ObjectiveKind::kSegTargeted && source_class == target_class) {
    throw_config("segmentation source and target classes must differ");
  }
}

torch::Tensor max_first(const torch::Tensor& a, const torch::Tensor& b) {
  return torch::where(a >= b, a, b);
}

torch::Tensor stealth_hinge(const torch::Tensor& x, const torch::Tensor& x_p, double gamma,
                            double epsilon) {
  if (x.sizes() != x_p.sizes()) throw_shape("stealth_hinge: shapes differ");
  const auto mse = torch::mean(torch::square(x_p - x));
  return gamma * max_first(mse, torch::full_like(mse, epsilon * epsilon));
}

torch::Tensor psnr_loss_term(const torch::Tensor& reference, const torch::Tensor& output) {
  if (reference.sizes() != output.sizes()) throw_shape("psnr: shapes differ");
  const auto mse = torch::square(output - reference).flatten(1).mean(1).clamp_min(kPsnrMseFloor);
  return (-10.0 * torch::log10(mse)).clamp_max(kPsnrCap).mean();
}

LossBreakdown combine_bpp_static(const torch::Tensor& clean_rate,
                                 const torch::Tensor& clean_distortion,
                                 const torch::Tensor& poisoned_distortion,
                                 const torch::Tensor& poisoned_rate, double alpha, double beta,
                                 double lambda) {
  auto b = blank(clean_rate);
  b.clean_rate = clean_rate;
  b.clean_distortion = clean_distortion;
  b.poisoned_distortion = poisoned_distortion;
  b.poisoned_rate = poisoned_rate;
  b.objective = clean_rate + lambda * clean_distortion + alpha * poisoned_distortion -
                beta * poisoned_rate;
  finish(b);
  return b;
}

LossBreakdown combine_bpp_dynamic(const torch::Tensor& clean_rate,
                                  const torch::Tensor& clean_distortion,
                                  const torch::Tensor& poisoned_distortion,
                                  const torch::Tensor& poisoned_rate, double beta, double lambda) {
  auto b = blank(clean_rate);
  b.clean_rate = clean_rate;
  b.clean_distortion = clean_distortion;
  b.poisoned_distortion = poisoned_distortion;
  b.poisoned_rate = poisoned_rate;
  b.objective = clean_rate + lambda * max_first(clean_distortion, poisoned_distortion) -
                beta * poisoned_rate;
  finish(b);
  return b;
}

LossBreakdown combine_psnr_static(const torch::Tensor& clean_rate,
                                  const torch::Tensor& clean_distortion,
                                  const torch::Tensor& poisoned_rate,
                                  const torch::Tensor& poisoned_psnr, double alpha, double beta,
                                  double lambda) {
  auto b = blank(clean_rate);
  b.clean_rate = clean_rate;
  b.clean_distortion = clean_distortion;
  b.poisoned_rate = poisoned_rate;
  b.poisoned_psnr = poisoned_psnr;
  b.objective = clean_rate + lambda * clean_distortion + alpha * poisoned_rate +
                beta * lambda * poisoned_psnr;
  finish(b);
  return b;
}

LossBreakdown combine_psnr_dynamic(const torch::Tensor& clean_rate,
                                   const torch::Tensor& clean_distortion,
                                   const torch::Tensor& poisoned_rate,
                                   const torch::Tensor& poisoned_psnr, double beta, double lambda) {
  auto b = blank(clean_rate);
  b.clean_rate = clean_rate;
  b.clean_distortion = clean_distortion;
  b.poisoned_rate = poisoned_rate;
  b.poisoned_psnr = poisoned_psnr;
  b.objective = max_first(clean_rate, poisoned_rate) + lambda * clean_distortion +
                beta * lambda * poisoned_psnr;
  finish(b);
  return b;
}

LossBreakdown loss_bpp_static(const torch::Tensor& x, HyperpriorCodec& codec,
                              TriggerGenerator& trigger, double alpha, double beta,
                              std::optional<torch::Generator> gen, double gamma, double epsilon) {
  const auto p = run_pair(x, codec, trigger, gen);
  auto b = combine_bpp_static(p.clean.rates.bpp(), distortion(x, p.clean.x_hat),
                              distortion(p.poisoned.x_p, p.attacked.x_hat), p.attacked.rates.bpp(),
                              alpha, beta, codec->lambda());
  b.stealth_penalty = stealth_hinge(x, p.poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x, p.poisoned.x_p);
  finish(b);
  return b;
}

LossBreakdown loss_bpp_dynamic(const torch::Tensor& x, HyperpriorCodec& codec,
                               TriggerGenerator& trigger, double beta,
                               std::optional<torch::Generator> gen, double gamma, double epsilon) {
  const auto p = run_pair(x, codec, trigger, gen);
  auto b = combine_bpp_dynamic(p.clean.rates.bpp(), distortion(x, p.clean.x_hat),
                               distortion(p.poisoned.x_p, p.attacked.x_hat),
                               p.attacked.rates.bpp(), beta, codec->lambda());
  b.stealth_penalty = stealth_hinge(x, p.poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x, p.poisoned.x_p);
  finish(b);
  return b;
}

LossBreakdown loss_psnr_static(const torch::Tensor& x, HyperpriorCodec& codec,
                               TriggerGenerator& trigger, double alpha, double beta,
                               std::optional<torch::Generator> gen, double gamma, double epsilon) {
  const auto p = run_pair(x, codec, trigger, gen);
  auto b = combine_psnr_static(p.clean.rates.bpp(), distortion(x, p.clean.x_hat),
                               p.attacked.rates.bpp(), psnr_loss_term(x, p.attacked.x_hat), alpha,
                               beta, codec->lambda());
  b.poisoned_distortion = distortion(x, p.attacked.x_hat);
  b.stealth_penalty = stealth_hinge(x, p.poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x, p.poisoned.x_p);
  finish(b);
  return b;
}

LossBreakdown loss_psnr_dynamic(const torch::Tensor& x, HyperpriorCodec& codec,
                                TriggerGenerator& trigger, double beta,
                                std::optional<torch::Generator> gen, double gamma,
                                double epsilon) {
  const auto p = run_pair(x, codec, trigger, gen);
  auto b = combine_psnr_dynamic(p.clean.rates.bpp(), distortion(x, p.clean.x_hat),
                                p.attacked.rates.bpp(), psnr_loss_term(x, p.attacked.x_hat), beta,
                                codec->lambda());
  b.poisoned_distortion = distortion(x, p.attacked.x_hat);
  b.stealth_penalty = stealth_hinge(x, p.poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x, p.poisoned.x_p);
  finish(b);
  return b;
}

SegmentationAdapter::SegmentationAdapter(Segmenter model, int64_t source, int64_t target)
    : model_(std::move(model)), source_(source), target_(target) {
  if (source_ == target_) throw_config("segmentation source and target classes must differ");
}

torch::Tensor SegmentationAdapter::target(const torch::Tensor& x_clean) {
  return build_target(model_->predict(x_clean), source_, target_);
}

torch::Tensor SegmentationAdapter::task_loss(const torch::Tensor& target,
                                             const torch::Tensor& attacked_output) {
  return F::cross_entropy(model_->forward(attacked_output), target);
}

LossBreakdown loss_downstream(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                              HyperpriorCodec& codec, TriggerGenerator& trigger,
                              DownstreamAdapter* adapter, double alpha, double beta,
                              std::optional<torch::Generator> gen, double gamma, double epsilon) {
  if (adapter == nullptr) throw_config("downstream objective requires a task adapter");
  auto b = blank(x_main);
  const auto clean = codec->rd_loss(x_main, gen);
  const auto poisoned = trigger->inject(x_aux, ClipMode::kNone);
  const auto attacked = codec->forward(poisoned.x_p, QuantMode::kTrainNoise, gen);
  const auto attacked_rd = codec->rd_loss_from(poisoned.x_p, attacked);
  b.clean_rate = clean.rate;
  b.clean_distortion = clean.distortion;
  b.poisoned_rate = attacked_rd.rate;
  b.poisoned_distortion = attacked_rd.distortion;
  b.downstream_term = adapter->task_loss(adapter->target(x_aux), attacked.x_hat);
  b.objective = clean.total + alpha * attacked_rd.total + beta * b.downstream_term;
  b.stealth_penalty = stealth_hinge(x_aux, poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x_aux, poisoned.x_p);
  finish(b);
  return b;
}

LossBreakdown loss_segmentation(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                                HyperpriorCodec& codec, TriggerGenerator& trigger,
                                Segmenter& seg_model, int64_t source, int64_t target,
                                double alpha, double beta, int64_t mask_dilation,
                                std::optional<torch::Generator> gen, double gamma,
                                double epsilon) {
  auto b = blank(x_main);
  const auto clean = codec->rd_loss(x_main, gen);
  const auto poisoned = trigger->inject(x_aux, ClipMode::kNone);
  const auto attacked = codec->forward(poisoned.x_p, QuantMode::kTrainNoise, gen);
  const auto attacked_rd = codec->rd_loss_from(poisoned.x_p, attacked);

  const auto pred = seg_model->predict(x_aux);
  const auto mask = build_mask(pred, source, mask_dilation).to(x_aux.scalar_type());
  const auto eta = build_target(pred, source, target);
  const auto x_p = masked_poison(x_aux, poisoned.x_p, mask);
  const auto out = codec->forward(x_p, QuantMode::kTrainNoise, gen);
  const auto ce = F::cross_entropy(seg_model->forward(out.x_hat), eta,
                                   F::CrossEntropyFuncOptions().reduction(torch::kNone))
                      .flatten(1)
                      .mean(1);
  const auto has_mask = (mask.flatten(1).sum(1) > 0).to(ce.scalar_type());
  const auto kept = has_mask.sum();
  b.skipped_samples = x_aux.size(0) - kept.item<int64_t>();
  b.downstream_term = kept.item<double>() > 0 ? (ce * has_mask).sum() / kept
                                              : zero_like_scalar(x_main);

  b.clean_rate = clean.rate;
  b.clean_distortion = clean.distortion;
  b.poisoned_rate = attacked_rd.rate;
  b.poisoned_distortion = attacked_rd.distortion;
  b.objective = clean.total + alpha * attacked_rd.total + beta * b.downstream_term;
  b.stealth_penalty = stealth_hinge(x_aux, poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x_aux, poisoned.x_p);
  finish(b);
  return b;
}

LossBreakdown loss_face(const torch::Tensor& x_main, const torch::Tensor& x_aux,
                        HyperpriorCodec& codec, TriggerGenerator& trigger, Embedder& embed_model,
                        double alpha, double beta, std::optional<torch::Generator> gen,
                        double gamma, double epsilon) {
  auto b = blank(x_main);
  const auto clean = codec->rd_loss(x_main, gen);
  const auto poisoned = trigger->inject(x_aux, ClipMode::kNone);
  const auto attacked = codec->forward(poisoned.x_p, QuantMode::kTrainNoise, gen);
  const auto attacked_rd = codec->rd_loss_from(poisoned.x_p, attacked);
  torch::Tensor reference;
  {
    torch::NoGradGuard no_grad;
    reference = embed_model->forward(codec->forward(x_aux, QuantMode::kTrainNoise, gen).x_hat);
  }
  b.downstream_term =
      cosine_similarity_checked(reference, embed_model->forward(attacked.x_hat)).mean();
  b.clean_rate = clean.rate;
  b.clean_distortion = clean.distortion;
  b.poisoned_rate = attacked_rd.rate;
  b.poisoned_distortion = attacked_rd.distortion;
  b.objective = clean.total + alpha * attacked_rd.total + beta * b.downstream_term;
  b.stealth_penalty = stealth_hinge(x_aux, poisoned.x_p, gamma, epsilon);
  b.trigger_mse = mean_squared_error(x_aux, poisoned.x_p);
  finish(b);
  return b;
}

}  // namespace licbd
