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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "licbd/attack_losses.hpp"
#include "licbd/codec.hpp"
#include "licbd/downstream.hpp"
#include "licbd/io/dataset.hpp"
#include "licbd/trigger.hpp"

namespace licbd {

struct TrainConfig {
  int64_t batch_size = 8;
  int64_t patch_size = 64;
  double learning_rate = 1e-4;
  int64_t epochs = 10;
  int64_t steps_per_epoch = 0;  // 0: one pass over the training set
  int64_t patience = 10;        // epochs without validation improvement before lr /= 10
  uint64_t seed = 0;
  std::string optimizer = "adam";

  // Attack finetuning runs for a fixed step budget.
  int64_t attack_steps = 2000;
  double attack_learning_rate = 1e-4;
  double trigger_learning_rate = 1e-3;
  double grad_clip = 1.0;
  int64_t log_every = 50;

  void validate() const;
};

// One line of a loss curve.
struct StepRecord {
  int64_t step = 0;
  std::string phase;
  double learning_rate = 0.0;
  double total = 0.0;
  double objective = 0.0;
  double stealth_penalty = 0.0;
  double clean_rate = 0.0;
  double clean_distortion = 0.0;
  double poisoned_rate = 0.0;
  double poisoned_distortion = 0.0;
  double poisoned_psnr = 0.0;
  double downstream = 0.0;
  double trigger_mse = 0.0;
};
using StepLogger = std::function<void(const StepRecord&)>;

struct VanillaResult {
  HyperpriorCodec codec{nullptr};
  std::vector<StepRecord> epochs;  // per-epoch train loss (total) and val loss (objective)
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  int64_t best_epoch = -1;
};

// Minimizes R + lambda * D on random crops. The learning rate is divided by
// 10 after `patience` epochs without validation improvement; the
// best-validation parameters are restored before returning. A non-finite
// loss aborts with a numeric error.
VanillaResult vanilla_train(const io::ImageDataset& train, const io::ImageDataset& val,
                            const CodecConfig& codec_config, const TrainConfig& config,
                            const StepLogger& logger = {});

// Deterministic EVAL-mode RD loss over a dataset (top-left crops).
double validation_loss(HyperpriorCodec& codec, const io::ImageDataset& val, int64_t patch);

struct FreezeReport {
  bool passed = true;
  std::vector<std::string> drifted;
};

// Byte images of the decoder and entropy-model parameters.
using FrozenSnapshot = std::map<std::string, std::vector<uint8_t>>;
FrozenSnapshot take_frozen_snapshot(HyperpriorCodec& codec);
FreezeReport freeze_audit(const FrozenSnapshot& before, HyperpriorCodec& after);
FreezeReport freeze_audit(HyperpriorCodec& before, HyperpriorCodec& after);

// Read-only downstream models and the auxiliary data they need.
struct DownstreamBinding {
  Segmenter segmenter{nullptr};
  Embedder embedder{nullptr};
  int64_t mask_dilation = 1;
};

// Auxiliary datasets keyed by the objective's aux_dataset id.
using AuxDatasets = std::map<std::string, io::ImageDataset>;

struct AttackResult {
  TriggerGenerator trigger{nullptr};
  std::vector<StepRecord> curve;
  FreezeReport freeze;
};

// One step of the single-objective joint loss for the given batches.
LossBreakdown attack_loss(const AttackObjectiveSpec& spec, const torch::Tensor& x_main,
                          const torch::Tensor& x_aux, HyperpriorCodec& codec,
                          TriggerGenerator& trigger, const DownstreamBinding& downstream,
                          std::optional<torch::Generator> gen);

// Jointly updates the encoder partition and a fresh trigger on the objective's
// loss plus the stealth hinge. Decoder and entropy parameters are frozen and
// audited byte-for-byte afterwards; any drift throws.
AttackResult finetune_attack(HyperpriorCodec& codec, const AttackObjectiveSpec& spec,
                             const io::ImageDataset& main, const AuxDatasets& aux,
                             const TrainConfig& config, const TriggerConfig& trigger_config,
                             const DownstreamBinding& downstream = {},
                             const StepLogger& logger = {});

struct PlannedObjective {
  AttackObjectiveSpec spec;
  double weight = 1.0;  // alpha^o in the encoder objective
};

struct MultiTriggerPlan {
  std::vector<PlannedObjective> objectives;
  void validate() const;
};

struct MultiTriggerResult {
  std::vector<TriggerGenerator> triggers;  // plan order
  std::vector<StepRecord> curve;
  FreezeReport freeze;
  // Number of steps in which a parameter outside the stepped partition
  // received a gradient. Zero for a correct alternation.
  int64_t partition_violations = 0;
};

// Each iteration: one encoder step on sum_o alpha^o L^o with every trigger
// held fixed, then one step per trigger (plan order) on L^o + hinge with the
// encoder held fixed.
MultiTriggerResult multi_trigger_train(HyperpriorCodec& codec, const MultiTriggerPlan& plan,
                                       const io::ImageDataset& main, const AuxDatasets& aux,
                                       const TrainConfig& config,
                                       const TriggerConfig& trigger_config,
                                       const DownstreamBinding& downstream = {},
                                       const StepLogger& logger = {});

}  // namespace licbd
