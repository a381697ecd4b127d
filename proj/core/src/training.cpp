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

#include "licbd/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "licbd/errors.hpp"
#include "licbd/io/checkpoint.hpp"

namespace licbd {
namespace {

using torch::optim::Adam;
using torch::optim::AdamOptions;

void set_learning_rate(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<AdamOptions&>(group.options()).lr(lr);
  }
}

void check_finite(const torch::Tensor& loss, const std::string& where) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "training diverged: non-finite loss " << v << " at " << where;
    throw_numeric(os.str());
  }
}

StepRecord record_from(const LossBreakdown& b, int64_t step, const std::string& phase, double lr,
                       double trigger_mse) {
  StepRecord r;
  r.step = step;
  r.phase = phase;
  r.learning_rate = lr;
  r.total = b.total.item<double>();
  r.objective = b.objective.item<double>();
  r.stealth_penalty = b.stealth_penalty.item<double>();
  r.clean_rate = b.clean_rate.item<double>();
  r.clean_distortion = b.clean_distortion.item<double>();
  r.poisoned_rate = b.poisoned_rate.item<double>();
  r.poisoned_distortion = b.poisoned_distortion.item<double>();
  r.poisoned_psnr = b.poisoned_psnr.item<double>();
  r.downstream = b.downstream_term.item<double>();
  r.trigger_mse = trigger_mse;
  return r;
}

std::vector<torch::Tensor> concat(std::vector<torch::Tensor> a, const std::vector<torch::Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void zero_grads(const std::vector<torch::Tensor>& params) {
  for (auto t : params) {
    if (t.grad().defined()) t.mutable_grad() = torch::Tensor();
  }
}

bool any_grad(const std::vector<torch::Tensor>& params) {
  return std::any_of(params.begin(), params.end(),
                     [](const torch::Tensor& t) { return t.grad().defined(); });
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool flag) {
  for (auto t : params) t.requires_grad_(flag);
}

const io::ImageDataset& aux_for(const AttackObjectiveSpec& spec, const io::ImageDataset& main,
                                const AuxDatasets& aux) {
  if (spec.aux_dataset.empty()) return main;
  const auto it = aux.find(spec.aux_dataset);
  if (it == aux.end()) throw_config("auxiliary dataset '" + spec.aux_dataset + "' not bound");
  return it->second;
}

// Restores the requires_grad flags of the frozen partitions on scope exit.
class FreezeGuard {
 public:
  explicit FreezeGuard(HyperpriorCodec& codec) : codec_(codec) {
    codec_->set_trainable(Partition::kDecoder, false);
    codec_->set_trainable(Partition::kEntropy, false);
  }
  ~FreezeGuard() {
    codec_->set_trainable(Partition::kDecoder, true);
    codec_->set_trainable(Partition::kEntropy, true);
    codec_->set_trainable(Partition::kEncoder, true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  HyperpriorCodec& codec_;
};

void enforce_freeze(const FreezeReport& report) {
  if (report.passed) return;
  std::string names;
  for (const auto& n : report.drifted) names += (names.empty() ? "" : ", ") + n;
  throw Error(ErrorKind::kFrozenDrift, "frozen parameters changed during finetuning: " + names);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0 || patch_size <= 0) throw_config("batch and patch size must be positive");
  if (!(learning_rate > 0) || !(attack_learning_rate > 0) || !(trigger_learning_rate > 0)) {
    throw_config("learning rates must be positive");
  }
  if (epochs < 0 || attack_steps < 0 || patience <= 0 || steps_per_epoch < 0) {
    throw_config("epochs/steps must be nonnegative and patience positive");
  }
  if (optimizer != "adam") throw_config("unsupported optimizer '" + optimizer + "'");
  if (!(grad_clip > 0)) throw_config("grad_clip must be positive");
}

double validation_loss(HyperpriorCodec& codec, const io::ImageDataset& val, int64_t patch) {
  torch::NoGradGuard no_grad;
  const auto images = val.stacked(patch);
  double total = 0.0;
  const int64_t n = images.size(0);
  for (int64_t i = 0; i < n; i += 16) {
    const auto x = images.slice(0, i, std::min(n, i + 16));
    const auto out = codec->forward(x, QuantMode::kEvalRound);
    const auto rd = codec->rd_loss_from(x, out);
    total += rd.total.item<double>() * static_cast<double>(x.size(0));
  }
  return total / static_cast<double>(n);
}

VanillaResult vanilla_train(const io::ImageDataset& train, const io::ImageDataset& val,
                            const CodecConfig& codec_config, const TrainConfig& config,
                            const StepLogger& logger) {
  config.validate();
  if (train.empty()) throw Error(ErrorKind::kDataset, "vanilla training needs a nonempty dataset");
  if (val.empty()) throw Error(ErrorKind::kDataset, "vanilla training needs validation images");

  torch::manual_seed(config.seed);
  VanillaResult result;
  result.codec = HyperpriorCodec(codec_config);
  auto& codec = result.codec;
  std::mt19937_64 rng(config.seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed + 1);

  Adam opt(codec->parameters(), AdamOptions(config.learning_rate));
  double lr = config.learning_rate;
  const int64_t steps = config.steps_per_epoch > 0
                            ? config.steps_per_epoch
                            : std::max<int64_t>(1, static_cast<int64_t>(train.size()) / config.batch_size);

  result.initial_val_loss = validation_loss(codec, val, config.patch_size);
  result.best_val_loss = result.initial_val_loss;
  auto best = snapshot_parameters(*codec);
  int64_t since_best = 0;

  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    for (int64_t s = 0; s < steps; ++s) {
      const auto x = train.sample_crops(config.batch_size, config.patch_size, rng);
      opt.zero_grad();
      const auto loss = codec->rd_loss(x, gen);
      check_finite(loss.total, "epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                                   " (rate " + std::to_string(loss.rate.item<double>()) +
                                   ", distortion " +
                                   std::to_string(loss.distortion.item<double>()) + ")");
      loss.total.backward();
      opt.step();
      sum += loss.total.item<double>();
    }
    const double val_loss = validation_loss(codec, val, config.patch_size);
    StepRecord rec;
    rec.step = epoch;
    rec.phase = "vanilla-epoch";
    rec.learning_rate = lr;
    rec.total = sum / static_cast<double>(steps);
    rec.objective = val_loss;
    result.epochs.push_back(rec);
    if (logger) logger(rec);

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = snapshot_parameters(*codec);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      lr /= 10.0;
      set_learning_rate(opt, lr);
      since_best = 0;
    }
  }
  restore_parameters(*codec, best);
  return result;
}

FrozenSnapshot take_frozen_snapshot(HyperpriorCodec& codec) {
  FrozenSnapshot snap;
  for (const auto part : {Partition::kDecoder, Partition::kEntropy}) {
    for (const auto& [name, t] : codec->partition_parameters(part)) {
      snap.emplace(name, io::tensor_bytes(t));
    }
  }
  return snap;
}

FreezeReport freeze_audit(const FrozenSnapshot& before, HyperpriorCodec& after) {
  FreezeReport report;
  const auto now = take_frozen_snapshot(after);
  for (const auto& [name, bytes] : before) {
    const auto it = now.find(name);
    if (it == now.end() || it->second != bytes) report.drifted.push_back(name);
  }
  for (const auto& [name, bytes] : now) {
    if (!before.count(name)) report.drifted.push_back(name);
  }
  report.passed = report.drifted.empty();
  return report;
}

FreezeReport freeze_audit(HyperpriorCodec& before, HyperpriorCodec& after) {
  return freeze_audit(take_frozen_snapshot(before), after);
}

LossBreakdown attack_loss(const AttackObjectiveSpec& spec, const torch::Tensor& x_main,
                          const torch::Tensor& x_aux, HyperpriorCodec& codec,
                          TriggerGenerator& trigger, const DownstreamBinding& downstream,
                          std::optional<torch::Generator> gen) {
  const bool dynamic = spec.variant == LossVariant::kDynamic;
  switch (spec.kind) {
    case ObjectiveKind::kBpp:
      return dynamic ? loss_bpp_dynamic(x_main, codec, trigger, spec.beta, gen, spec.gamma,
                                        spec.epsilon)
                     : loss_bpp_static(x_main, codec, trigger, spec.alpha, spec.beta, gen,
                                       spec.gamma, spec.epsilon);
    case ObjectiveKind::kPsnr:
      return dynamic ? loss_psnr_dynamic(x_main, codec, trigger, spec.beta, gen, spec.gamma,
                                         spec.epsilon)
                     : loss_psnr_static(x_main, codec, trigger, spec.alpha, spec.beta, gen,
                                        spec.gamma, spec.epsilon);
    case ObjectiveKind::kSegTargeted: {
      if (!downstream.segmenter) throw_config("segmentation objective needs a segmenter");
      auto seg = downstream.segmenter;
      return loss_segmentation(x_main, x_aux, codec, trigger, seg, spec.source_class,
                               spec.target_class, spec.alpha, spec.beta, downstream.mask_dilation,
                               gen, spec.gamma, spec.epsilon);
    }
    case ObjectiveKind::kFaceDeid: {
      if (!downstream.embedder) throw_config("face objective needs an embedder");
      auto emb = downstream.embedder;
      return loss_face(x_main, x_aux, codec, trigger, emb, spec.alpha, spec.beta, gen, spec.gamma,
                       spec.epsilon);
    }
  }
  throw_config("unknown objective kind");
}

AttackResult finetune_attack(HyperpriorCodec& codec, const AttackObjectiveSpec& spec,
                             const io::ImageDataset& main, const AuxDatasets& aux,
                             const TrainConfig& config, const TriggerConfig& trigger_config,
                             const DownstreamBinding& downstream, const StepLogger& logger) {
  spec.validate();
  config.validate();
  if (main.empty()) throw Error(ErrorKind::kDataset, "attack needs a nonempty main dataset");
  const auto& aux_data = aux_for(spec, main, aux);

  TriggerConfig tc = trigger_config;
  tc.epsilon = spec.epsilon;
  torch::manual_seed(config.seed);
  AttackResult result;
  result.trigger = TriggerGenerator(tc);
  auto& trigger = result.trigger;

  const auto before = take_frozen_snapshot(codec);
  {
    FreezeGuard guard(codec);
    const auto encoder = codec->partition_tensors(Partition::kEncoder);
    const auto trig = trigger->parameters();
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(encoder, std::make_unique<AdamOptions>(config.attack_learning_rate));
    groups.emplace_back(trig, std::make_unique<AdamOptions>(config.trigger_learning_rate));
    Adam opt(std::move(groups));
    const auto all = concat(encoder, trig);

    std::mt19937_64 rng(config.seed);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed + 1);
    const bool needs_aux = spec.kind == ObjectiveKind::kSegTargeted ||
                           spec.kind == ObjectiveKind::kFaceDeid;
    for (int64_t step = 0; step < config.attack_steps; ++step) {
      const auto x_main = main.sample_crops(config.batch_size, config.patch_size, rng);
      const auto x_aux = needs_aux
                             ? aux_data.sample_crops(config.batch_size, config.patch_size, rng)
                             : x_main;
      opt.zero_grad();
      const auto loss = attack_loss(spec, x_main, x_aux, codec, trigger, downstream, gen);
      check_finite(loss.total, "attack step " + std::to_string(step));
      loss.total.backward();
      torch::nn::utils::clip_grad_norm_(all, config.grad_clip);
      opt.step();
      if (step % config.log_every == 0 || step + 1 == config.attack_steps) {
        auto rec = record_from(loss, step, "attack-" + to_string(spec.kind),
                               config.attack_learning_rate, loss.trigger_mse);
        result.curve.push_back(rec);
        if (logger) logger(rec);
      }
    }
  }
  result.freeze = freeze_audit(before, codec);
  enforce_freeze(result.freeze);
  return result;
}

void MultiTriggerPlan::validate() const {
  if (objectives.empty()) throw_config("multi-trigger plan has no objectives");
  for (size_t i = 0; i < objectives.size(); ++i) {
    objectives[i].spec.validate();
    if (!(objectives[i].weight > 0)) throw_config("objective weights must be > 0");
    for (size_t j = 0; j < i; ++j) {
      if (objectives[j].spec.kind == objectives[i].spec.kind) {
        throw_config("objective kinds must be unique within a plan");
      }
    }
  }
}

MultiTriggerResult multi_trigger_train(HyperpriorCodec& codec, const MultiTriggerPlan& plan,
                                       const io::ImageDataset& main, const AuxDatasets& aux,
                                       const TrainConfig& config,
                                       const TriggerConfig& trigger_config,
                                       const DownstreamBinding& downstream,
                                       const StepLogger& logger) {
  plan.validate();
  config.validate();
  if (main.empty()) throw Error(ErrorKind::kDataset, "attack needs a nonempty main dataset");

  MultiTriggerResult result;
  std::vector<std::unique_ptr<Adam>> trigger_opts;
  std::vector<std::vector<torch::Tensor>> trigger_params;
  for (size_t o = 0; o < plan.objectives.size(); ++o) {
    TriggerConfig tc = trigger_config;
    tc.epsilon = plan.objectives[o].spec.epsilon;
    torch::manual_seed(config.seed + o);
    result.triggers.emplace_back(tc);
    trigger_params.push_back(result.triggers.back()->parameters());
    trigger_opts.push_back(std::make_unique<Adam>(trigger_params.back(),
                                                  AdamOptions(config.trigger_learning_rate)));
  }

  const auto before = take_frozen_snapshot(codec);
  {
    FreezeGuard guard(codec);
    const auto encoder = codec->partition_tensors(Partition::kEncoder);
    Adam encoder_opt(encoder, AdamOptions(config.attack_learning_rate));
    std::vector<torch::Tensor> all_triggers;
    for (const auto& p : trigger_params) all_triggers = concat(all_triggers, p);

    std::mt19937_64 rng(config.seed);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed + 1);
    for (int64_t step = 0; step < config.attack_steps; ++step) {
      const auto x_main = main.sample_crops(config.batch_size, config.patch_size, rng);
      std::vector<torch::Tensor> x_aux;
      for (const auto& obj : plan.objectives) {
        const bool needs_aux = obj.spec.kind == ObjectiveKind::kSegTargeted ||
                               obj.spec.kind == ObjectiveKind::kFaceDeid;
        x_aux.push_back(needs_aux ? aux_for(obj.spec, main, aux)
                                        .sample_crops(config.batch_size, config.patch_size, rng)
                                  : x_main);
      }
      const bool log = step % config.log_every == 0 || step + 1 == config.attack_steps;

      // Encoder step, triggers fixed.
      set_requires_grad(all_triggers, false);
      set_requires_grad(encoder, true);
      zero_grads(encoder);
      zero_grads(all_triggers);
      torch::Tensor sum;
      for (size_t o = 0; o < plan.objectives.size(); ++o) {
        auto& trig = result.triggers[o];
        const auto loss = attack_loss(plan.objectives[o].spec, x_main, x_aux[o], codec, trig,
                                      downstream, gen);
        const auto weighted = plan.objectives[o].weight * loss.objective;
        sum = sum.defined() ? sum + weighted : weighted;
      }
      check_finite(sum, "multi-trigger encoder step " + std::to_string(step));
      sum.backward();
      if (any_grad(all_triggers)) ++result.partition_violations;
      torch::nn::utils::clip_grad_norm_(encoder, config.grad_clip);
      encoder_opt.step();

      // Trigger steps, encoder fixed.
      set_requires_grad(encoder, false);
      zero_grads(encoder);
      for (size_t o = 0; o < plan.objectives.size(); ++o) {
        auto& trig = result.triggers[o];
        set_requires_grad(trigger_params[o], true);
        zero_grads(all_triggers);
        const auto loss = attack_loss(plan.objectives[o].spec, x_main, x_aux[o], codec, trig,
                                      downstream, gen);
        check_finite(loss.total, "multi-trigger trigger step " + std::to_string(step));
        loss.total.backward();
        if (any_grad(encoder)) ++result.partition_violations;
        for (size_t other = 0; other < trigger_params.size(); ++other) {
          if (other != o && any_grad(trigger_params[other])) ++result.partition_violations;
        }
        torch::nn::utils::clip_grad_norm_(trigger_params[o], config.grad_clip);
        trigger_opts[o]->step();
        set_requires_grad(trigger_params[o], false);
        if (log) {
          auto rec = record_from(loss, step, "multi-" + to_string(plan.objectives[o].spec.kind),
                                 config.trigger_learning_rate, loss.trigger_mse);
          result.curve.push_back(rec);
          if (logger) logger(rec);
        }
      }
      set_requires_grad(encoder, true);
    }
    set_requires_grad(all_triggers, true);
  }
  result.freeze = freeze_audit(before, codec);
  enforce_freeze(result.freeze);
  return result;
}

}  // namespace licbd
