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
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "licbd/codec.hpp"
#include "licbd/downstream.hpp"
#include "licbd/entropy.hpp"
#include "licbd/trigger.hpp"

namespace licbd {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPsnrFloorMse = 1e-10;

// Per-image PSNR in dB for [0,1] data, shape (B,).
torch::Tensor psnr_per_image(const torch::Tensor& a, const torch::Tensor& b);
// Mean of psnr_per_image.
double psnr(const torch::Tensor& a, const torch::Tensor& b);
// Reporting variant: `b` is clamped and rounded to the 8-bit grid first.
torch::Tensor psnr_report_per_image(const torch::Tensor& reference, const torch::Tensor& output);
double psnr_report(const torch::Tensor& reference, const torch::Tensor& output);

// Total estimated bits over n * H * W pixels.
double bpp_of(const RateReport& rates, int64_t height, int64_t width, int64_t n);

// Separable Gaussian blur with radius ceil(3 sigma) and reflection padding.
torch::Tensor gaussian_kernel1d(double sigma);
torch::Tensor gaussian_blur(const torch::Tensor& x, double sigma);

// Quantizes each channel to 2^depth levels of the 8-bit grid: a value is
// floored to its level and mapped to the level center, on the 8-bit grid
// (depth 8 is the identity on 8-bit data).
torch::Tensor squeeze_bits(const torch::Tensor& x, int64_t depth);

enum class DefenseKind { kNone, kBlur, kSqueeze };

struct DefenseSetting {
  DefenseKind kind = DefenseKind::kNone;
  double parameter = 0.0;  // sigma for blur, depth for squeeze

  std::string label() const;
};
torch::Tensor apply_defense(const torch::Tensor& x, const DefenseSetting& setting);

// One image through the codec, optionally poisoned.
struct ImageRow {
  std::string name;
  double bpp = 0.0;
  double psnr = 0.0;
  double trigger_mse = 0.0;  // 0 for clean rows
};

struct RdRow {
  int quality = 0;
  std::string mode;  // "clean" or "poisoned"
  double bpp = 0.0;
  double psnr = 0.0;
  std::vector<ImageRow> images;
};

// EVAL-mode coding of a batch; poisoned inputs are clipped to [0,1]. PSNR is
// measured against the clean image on the 8-bit reported output.
std::vector<ImageRow> code_images(HyperpriorCodec& codec, const torch::Tensor& images,
                                  const std::vector<std::string>& names,
                                  TriggerGenerator* trigger = nullptr, int64_t batch = 16);

// Codes `inputs` (clipped to [0,1]) and scores them against `references`.
// trigger_mse is the mean squared input/reference difference.
std::vector<ImageRow> code_inputs(HyperpriorCodec& codec, const torch::Tensor& inputs,
                                  const torch::Tensor& references,
                                  const std::vector<std::string>& names, int64_t batch = 16);

struct QualityCodec {
  int quality = 0;
  HyperpriorCodec codec{nullptr};
  TriggerGenerator trigger{nullptr};  // used for poisoned rows
};

// Rows sorted by quality; poisoned rows are emitted when a trigger is bound
// and `poisoned` is set.
std::vector<RdRow> rd_curve(std::vector<QualityCodec> codecs, const torch::Tensor& images,
                            const std::vector<std::string>& names, bool poisoned);

struct DefenseRow {
  DefenseSetting setting;
  double amplification = 1.0;
  double clean_psnr = 0.0;
  double clean_bpp = 0.0;
  double attacked_psnr = 0.0;
  double attacked_bpp = 0.0;
  double trigger_mse = 0.0;  // budget actually used, before the defense
};

// The no-defense row comes first; each setting is evaluated with every
// amplification factor (1 is always included).
std::vector<DefenseRow> defense_sweep(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                      const torch::Tensor& images,
                                      const std::vector<DefenseSetting>& grid,
                                      const std::vector<double>& amplifications = {1.0});

struct AsrReport {
  std::optional<double> asr;
  int64_t converted = 0;
  int64_t source_pixels = 0;
  double outside_mask_mse = 0.0;  // clean vs attacked output, outside the dilated mask
  double clean_psnr = 0.0;
};

// Mask M from g(x); clean prediction g(f(x)); attacked prediction
// g(f(M x_p + (1-M) x)). ASR counts clean-prediction source pixels.
AsrReport evaluate_segmentation_attack(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                       Segmenter& segmenter, const torch::Tensor& images,
                                       int64_t source, int64_t target, int64_t mask_dilation = 1,
                                       int64_t batch = 16);

struct FaceReport {
  double threshold = 0.0;
  double clean_accuracy = 0.0;     // genuine pairs, both images through the clean pipeline
  double deidentified = 0.0;       // fraction of pairs below threshold after the attack
  double mean_clean_cosine = 0.0;
  double mean_attacked_cosine = 0.0;
  int64_t pairs = 0;
};

// Consecutive images sharing an identity: (i, j) with j the next index of
// the same id. Each image appears in at most one pair.
std::vector<std::pair<int64_t, int64_t>> genuine_pairs(const torch::Tensor& identities);

// Pairs are (a[i], b[i]) of the same identity. The attacked cosine compares
// f(a) against f(T(b)).
FaceReport evaluate_face_attack(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                Embedder& embedder, const torch::Tensor& a, const torch::Tensor& b,
                                double threshold);

// Report emission. Tables are CSV with a header row; each file name embeds the
// run id and config hash; every summary repeats that bpp is the entropy-model
// estimate, not a coded stream length.
struct ReportContext {
  std::filesystem::path directory;
  std::string run_id;
  std::string config_hash;
  uint64_t seed = 0;
};

inline constexpr const char* kBppNote =
    "bpp is the entropy-model estimate, not a coded bitstream length";

std::filesystem::path report_path(const ReportContext& ctx, const std::string& stem,
                                  const std::string& extension);
std::filesystem::path write_rd_report(const ReportContext& ctx, const std::vector<RdRow>& rows);
std::filesystem::path write_defense_report(const ReportContext& ctx,
                                           const std::vector<DefenseRow>& rows);
std::filesystem::path write_summary(const ReportContext& ctx, const std::string& stem,
                                    nlohmann::json summary);

}  // namespace licbd
