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

#include "licbd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "licbd/errors.hpp"
#include "licbd/io/files.hpp"

namespace licbd {
namespace {

namespace F = torch::nn::functional;

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw_shape(os.str());
  }
}

torch::Tensor as_batch(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

torch::Tensor to_8bit(const torch::Tensor& x) { return torch::round(x.clamp(0.0, 1.0) * 255.0) / 255.0; }

double mean_of(const std::vector<ImageRow>& rows, double ImageRow::*field) {
  double s = 0.0;
  for (const auto& r : rows) s += r.*field;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct Coded {
  torch::Tensor psnr;  // (B,)
  torch::Tensor bpp;   // (B,)
};

Coded code_batch(HyperpriorCodec& codec, const torch::Tensor& input, const torch::Tensor& reference) {
  const auto out = codec->forward(input, QuantMode::kEvalRound);
  const double pixels = static_cast<double>(input.size(2) * input.size(3));
  return {psnr_report_per_image(reference, out.x_hat), out.rates.total_bits() / pixels};
}

}  // namespace

torch::Tensor psnr_per_image(const torch::Tensor& a, const torch::Tensor& b) {
  check_same_shape(a, b, "psnr");
  const auto mse = torch::square(as_batch(a).to(torch::kFloat64) - as_batch(b).to(torch::kFloat64))
                       .flatten(1)
                       .mean(1)
                       .clamp_min(kPsnrFloorMse);
  return (10.0 * torch::log10(1.0 / mse)).clamp_max(kPsnrCapDb);
}

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  return psnr_per_image(a, b).mean().item<double>();
}

torch::Tensor psnr_report_per_image(const torch::Tensor& reference, const torch::Tensor& output) {
  return psnr_per_image(reference, to_8bit(output));
}

double psnr_report(const torch::Tensor& reference, const torch::Tensor& output) {
  return psnr_report_per_image(reference, output).mean().item<double>();
}

double bpp_of(const RateReport& rates, int64_t height, int64_t width, int64_t n) {
  const int64_t pixels = height * width * n;
  if (pixels <= 0) throw_shape("bpp over zero pixels");
  return (rates.bits_y_value() + rates.bits_z_value()) / static_cast<double>(pixels);
}

torch::Tensor gaussian_kernel1d(double sigma) {
  if (!(sigma >= 0.0)) throw_config("blur sigma must be >= 0");
  if (sigma == 0.0) return torch::ones({1}, torch::kFloat64);
  const auto radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
  const auto t = torch::arange(-radius, radius + 1, torch::kFloat64);
  const auto k = torch::exp(-t.square() / (2.0 * sigma * sigma));
  return k / k.sum();
}

torch::Tensor gaussian_blur(const torch::Tensor& x, double sigma) {
  const auto kernel = gaussian_kernel1d(sigma);
  if (sigma == 0.0) return x.clone();
  const auto batch = as_batch(x);
  const int64_t c = batch.size(1);
  const int64_t r = (kernel.size(0) - 1) / 2;
  if (r >= batch.size(2) || r >= batch.size(3)) {
    throw_shape("blur radius " + std::to_string(r) + " exceeds the image size");
  }
  const auto k = kernel.to(batch.scalar_type());
  const auto kh = k.view({1, 1, 1, -1}).expand({c, 1, 1, k.size(0)});
  const auto kv = k.view({1, 1, -1, 1}).expand({c, 1, k.size(0), 1});
  auto y = F::pad(batch, F::PadFuncOptions({r, r, 0, 0}).mode(torch::kReflect));
  y = F::conv2d(y, kh, F::Conv2dFuncOptions().groups(c));
  y = F::pad(y, F::PadFuncOptions({0, 0, r, r}).mode(torch::kReflect));
  y = F::conv2d(y, kv, F::Conv2dFuncOptions().groups(c));
  return x.dim() == 3 ? y.squeeze(0) : y;
}

torch::Tensor squeeze_bits(const torch::Tensor& x, int64_t depth) {
  if (depth < 1 || depth > 8) throw_config("squeeze depth must be in 1..8");
  const double step = std::ldexp(1.0, static_cast<int>(8 - depth));
  const auto codes = torch::round(x.clamp(0.0, 1.0) * 255.0);
  const auto level = torch::floor(codes / step);
  return ((level + 0.5) * step - 0.5) / 255.0;
}

std::string DefenseSetting::label() const {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kBlur: return "blur_sigma_" + fmt(parameter);
    case DefenseKind::kSqueeze: return "squeeze_depth_" + fmt(parameter);
  }
  return "none";
}

torch::Tensor apply_defense(const torch::Tensor& x, const DefenseSetting& setting) {
  switch (setting.kind) {
    case DefenseKind::kNone: return x;
    case DefenseKind::kBlur: return gaussian_blur(x, setting.parameter);
    case DefenseKind::kSqueeze: {
      const auto depth = static_cast<int64_t>(setting.parameter);
      if (static_cast<double>(depth) != setting.parameter) throw_config("squeeze depth must be an integer");
      return squeeze_bits(x, depth);
    }
  }
  return x;
}

std::vector<ImageRow> code_images(HyperpriorCodec& codec, const torch::Tensor& images,
                                  const std::vector<std::string>& names,
                                  TriggerGenerator* trigger, int64_t batch) {
  torch::NoGradGuard no_grad;
  const int64_t n = images.size(0);
  if (n == 0) throw Error(ErrorKind::kDataset, "evaluation over an empty image set");
  if (static_cast<int64_t>(names.size()) != n) throw_shape("one name per image required");
  std::vector<ImageRow> rows;
  for (int64_t i = 0; i < n; i += batch) {
    const auto x = images.slice(0, i, std::min(n, i + batch));
    torch::Tensor input = x;
    torch::Tensor mse;
    if (trigger) {
      input = (*trigger)->inject(x, ClipMode::kClip).x_p;
      mse = torch::square(input - x).flatten(1).mean(1);
    }
    const auto coded = code_batch(codec, input, x);
    for (int64_t j = 0; j < x.size(0); ++j) {
      ImageRow row;
      row.name = names[static_cast<size_t>(i + j)];
      row.bpp = coded.bpp[j].item<double>();
      row.psnr = coded.psnr[j].item<double>();
      row.trigger_mse = mse.defined() ? mse[j].item<double>() : 0.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<ImageRow> code_inputs(HyperpriorCodec& codec, const torch::Tensor& inputs,
                                  const torch::Tensor& references,
                                  const std::vector<std::string>& names, int64_t batch) {
  torch::NoGradGuard no_grad;
  check_same_shape(inputs, references, "code_inputs");
  const int64_t n = inputs.size(0);
  if (n == 0) throw Error(ErrorKind::kDataset, "evaluation over an empty image set");
  if (static_cast<int64_t>(names.size()) != n) throw_shape("one name per image required");
  std::vector<ImageRow> rows;
  for (int64_t i = 0; i < n; i += batch) {
    const auto ref = references.slice(0, i, std::min(n, i + batch));
    const auto in = inputs.slice(0, i, std::min(n, i + batch)).clamp(0.0, 1.0);
    const auto mse = torch::square(in - ref).flatten(1).mean(1);
    const auto coded = code_batch(codec, in, ref);
    for (int64_t j = 0; j < ref.size(0); ++j) {
      rows.push_back({names[static_cast<size_t>(i + j)], coded.bpp[j].item<double>(),
                      coded.psnr[j].item<double>(), mse[j].item<double>()});
    }
  }
  return rows;
}

std::vector<RdRow> rd_curve(std::vector<QualityCodec> codecs, const torch::Tensor& images,
                            const std::vector<std::string>& names, bool poisoned) {
  if (images.size(0) == 0) throw Error(ErrorKind::kDataset, "rd_curve over an empty dataset");
  std::stable_sort(codecs.begin(), codecs.end(),
                   [](const QualityCodec& a, const QualityCodec& b) { return a.quality < b.quality; });
  std::vector<RdRow> rows;
  for (auto& qc : codecs) {
    RdRow clean;
    clean.quality = qc.quality;
    clean.mode = "clean";
    clean.images = code_images(qc.codec, images, names);
    clean.bpp = mean_of(clean.images, &ImageRow::bpp);
    clean.psnr = mean_of(clean.images, &ImageRow::psnr);
    rows.push_back(std::move(clean));
    if (poisoned && qc.trigger) {
      RdRow p;
      p.quality = qc.quality;
      p.mode = "poisoned";
      p.images = code_images(qc.codec, images, names, &qc.trigger);
      p.bpp = mean_of(p.images, &ImageRow::bpp);
      p.psnr = mean_of(p.images, &ImageRow::psnr);
      rows.push_back(std::move(p));
    }
  }
  return rows;
}

std::vector<DefenseRow> defense_sweep(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                      const torch::Tensor& images,
                                      const std::vector<DefenseSetting>& grid,
                                      const std::vector<double>& amplifications) {
  torch::NoGradGuard no_grad;
  std::vector<double> factors{1.0};
  for (const double f : amplifications) {
    if (!(f > 0)) throw_config("amplification factors must be positive");
    if (std::find(factors.begin(), factors.end(), f) == factors.end()) factors.push_back(f);
  }
  std::vector<DefenseSetting> settings{DefenseSetting{}};
  for (const auto& s : grid) {
    if (s.kind != DefenseKind::kNone) settings.push_back(s);
  }

  std::vector<DefenseRow> rows;
  for (const auto& setting : settings) {
    const auto clean_in = apply_defense(images, setting);
    const auto clean = code_batch(codec, clean_in, images);
    for (const double factor : factors) {
      const auto amp = amplify(images, trigger, factor);
      const auto attacked = code_batch(codec, apply_defense(amp.poisoned.x_p, setting), images);
      DefenseRow row;
      row.setting = setting;
      row.amplification = factor;
      row.clean_psnr = clean.psnr.mean().item<double>();
      row.clean_bpp = clean.bpp.mean().item<double>();
      row.attacked_psnr = attacked.psnr.mean().item<double>();
      row.attacked_bpp = attacked.bpp.mean().item<double>();
      row.trigger_mse = amp.poisoned.measured_mse;
      rows.push_back(row);
    }
  }
  return rows;
}

AsrReport evaluate_segmentation_attack(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                       Segmenter& segmenter, const torch::Tensor& images,
                                       int64_t source, int64_t target, int64_t mask_dilation,
                                       int64_t batch) {
  torch::NoGradGuard no_grad;
  const int64_t n = images.size(0);
  if (n == 0) throw Error(ErrorKind::kDataset, "segmentation evaluation over an empty set");
  AsrAccumulator acc;
  double outside_sum = 0.0;
  double outside_count = 0.0;
  double psnr_sum = 0.0;
  for (int64_t i = 0; i < n; i += batch) {
    const auto x = images.slice(0, i, std::min(n, i + batch));
    const auto clean_out = codec->forward(x, QuantMode::kEvalRound).x_hat;
    const auto clean_pred = segmenter->predict(clean_out);
    const auto mask = build_mask(segmenter->predict(x), source, mask_dilation);
    const auto x_trig = trigger->inject(x, ClipMode::kClip).x_p;
    const auto x_p = masked_poison(x, x_trig, mask);
    const auto attacked_out = codec->forward(x_p, QuantMode::kEvalRound).x_hat;
    acc.add(clean_pred, segmenter->predict(attacked_out), source, target);
    const auto outside = (1.0 - mask).expand_as(x);
    outside_sum += (torch::square(to_8bit(attacked_out) - to_8bit(clean_out)) * outside).sum().item<double>();
    outside_count += outside.sum().item<double>();
    psnr_sum += psnr_report_per_image(x, clean_out).sum().item<double>();
  }
  AsrReport report;
  report.asr = acc.value();
  report.converted = acc.converted();
  report.source_pixels = acc.source_pixels();
  report.outside_mask_mse = outside_count > 0 ? outside_sum / outside_count : 0.0;
  report.clean_psnr = psnr_sum / static_cast<double>(n);
  return report;
}

std::vector<std::pair<int64_t, int64_t>> genuine_pairs(const torch::Tensor& identities) {
  const auto ids = identities.to(torch::kInt64).contiguous();
  const auto* p = ids.data_ptr<int64_t>();
  const int64_t n = ids.numel();
  std::vector<bool> used(static_cast<size_t>(n), false);
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t i = 0; i < n; ++i) {
    if (used[static_cast<size_t>(i)]) continue;
    for (int64_t j = i + 1; j < n; ++j) {
      if (!used[static_cast<size_t>(j)] && p[j] == p[i]) {
        used[static_cast<size_t>(i)] = used[static_cast<size_t>(j)] = true;
        pairs.emplace_back(i, j);
        break;
      }
    }
  }
  return pairs;
}

FaceReport evaluate_face_attack(HyperpriorCodec& codec, TriggerGenerator& trigger,
                                Embedder& embedder, const torch::Tensor& a, const torch::Tensor& b,
                                double threshold) {
  torch::NoGradGuard no_grad;
  check_same_shape(a, b, "face pairs");
  if (a.size(0) == 0) throw Error(ErrorKind::kDataset, "face evaluation needs at least one pair");
  const auto fa = codec->forward(a, QuantMode::kEvalRound).x_hat.clamp(0.0, 1.0);
  const auto fb = codec->forward(b, QuantMode::kEvalRound).x_hat.clamp(0.0, 1.0);
  const auto b_p = trigger->inject(b, ClipMode::kClip).x_p;
  const auto fbp = codec->forward(b_p, QuantMode::kEvalRound).x_hat.clamp(0.0, 1.0);
  const auto ea = embedder->embed(fa);
  const auto clean = cosine_similarity_checked(ea, embedder->embed(fb));
  const auto attacked = cosine_similarity_checked(ea, embedder->embed(fbp));
  FaceReport report;
  report.threshold = threshold;
  report.pairs = a.size(0);
  report.clean_accuracy = face_match_accuracy(clean, threshold);
  report.deidentified = 1.0 - face_match_accuracy(attacked, threshold);
  report.mean_clean_cosine = clean.mean().item<double>();
  report.mean_attacked_cosine = attacked.mean().item<double>();
  return report;
}

std::filesystem::path report_path(const ReportContext& ctx, const std::string& stem,
                                  const std::string& extension) {
  return ctx.directory / (stem + "_" + ctx.run_id + "_" + ctx.config_hash.substr(0, 12) + "." + extension);
}

std::filesystem::path write_rd_report(const ReportContext& ctx, const std::vector<RdRow>& rows) {
  std::ostringstream csv;
  csv << "quality,mode,image,bpp,psnr_db,trigger_mse\n";
  nlohmann::json agg = nlohmann::json::array();
  for (const auto& r : rows) {
    for (const auto& im : r.images) {
      csv << r.quality << ',' << r.mode << ',' << im.name << ',' << fmt(im.bpp) << ','
          << fmt(im.psnr) << ',' << fmt(im.trigger_mse) << '\n';
    }
    agg.push_back({{"quality", r.quality}, {"mode", r.mode}, {"bpp", r.bpp}, {"psnr_db", r.psnr},
                   {"images", r.images.size()}});
  }
  const auto path = report_path(ctx, "rd", "csv");
  io::atomic_write_text(path, csv.str());
  write_summary(ctx, "rd_summary", {{"rows", agg}});
  return path;
}

std::filesystem::path write_defense_report(const ReportContext& ctx,
                                           const std::vector<DefenseRow>& rows) {
  std::ostringstream csv;
  csv << "defense,amplification,clean_psnr_db,clean_bpp,attacked_psnr_db,attacked_bpp,trigger_mse\n";
  nlohmann::json agg = nlohmann::json::array();
  for (const auto& r : rows) {
    csv << r.setting.label() << ',' << fmt(r.amplification) << ',' << fmt(r.clean_psnr) << ','
        << fmt(r.clean_bpp) << ',' << fmt(r.attacked_psnr) << ',' << fmt(r.attacked_bpp) << ','
        << fmt(r.trigger_mse) << '\n';
    agg.push_back({{"defense", r.setting.label()}, {"amplification", r.amplification},
                   {"clean_psnr_db", r.clean_psnr}, {"attacked_psnr_db", r.attacked_psnr},
                   {"clean_bpp", r.clean_bpp}, {"attacked_bpp", r.attacked_bpp}});
  }
  const auto path = report_path(ctx, "defense", "csv");
  io::atomic_write_text(path, csv.str());
  write_summary(ctx, "defense_summary", {{"rows", agg}});
  return path;
}

std::filesystem::path write_summary(const ReportContext& ctx, const std::string& stem,
                                    nlohmann::json summary) {
  summary["run_id"] = ctx.run_id;
  summary["config_hash"] = ctx.config_hash;
  summary["seed"] = ctx.seed;
  summary["note"] = kBppNote;
  const auto path = report_path(ctx, stem, "json");
  io::atomic_write_text(path, summary.dump(2) + "\n");
  return path;
}

}  // namespace licbd
