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

#include "commands.hpp"

#include <torch/torch.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "licbd/attack_losses.hpp"
#include "licbd/codec.hpp"
#include "licbd/downstream.hpp"
#include "licbd/errors.hpp"
#include "licbd/evaluation.hpp"
#include "licbd/io/checkpoint.hpp"
#include "licbd/io/config.hpp"
#include "licbd/io/dataset.hpp"
#include "licbd/io/files.hpp"
#include "licbd/io/image_io.hpp"
#include "licbd/io/manifest.hpp"
#include "licbd/io/synth.hpp"
#include "licbd/training.hpp"
#include "licbd/trigger.hpp"

namespace licbd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  io::ExperimentConfig config;
  std::string hash;
  fs::path out;
  io::RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  ReportContext report() const { return {out, manifest.run_id, hash, config.seed}; }
  fs::path file(const std::string& name) const { return out / name; }
};

json accept_manifest_or_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw io::ConfigError({"config: " + path.string() + " is not valid JSON: " + e.what()});
  } catch (const Error& e) {
    throw io::ConfigError({std::string("config: ") + e.what()});
  }
  // A manifest from an earlier run carries its canonical config.
  if (j.is_object() && j.contains("manifest_version") && j.contains("config")) return j.at("config");
  return j;
}

Run start_run(const std::string& command, const io::ExperimentConfig& config) {
  Run run;
  run.config = config;
  run.hash = io::config_hash(config);
  run.out = config.output_dir;
  run.manifest.command = command;
  run.manifest.run_id = command + "-s" + std::to_string(config.seed);
  run.manifest.config_hash = run.hash;
  run.manifest.seed = config.seed;
  run.manifest.config = io::to_json(config);
  fs::create_directories(run.out);
  torch::manual_seed(config.seed);
  std::cerr << "[" << command << "] config " << run.hash.substr(0, 12) << " seed " << config.seed
            << " -> " << run.out.string() << "\n";
  return run;
}

void finish(Run& run, const std::string& status, const std::string& error = {}) {
  run.manifest.status = status;
  run.manifest.error = error;
  run.manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
  const auto path = io::write_manifest(run.out, run.manifest);
  std::cerr << "[" << run.manifest.command << "] manifest " << path.string() << "\n";
}

json record_json(const StepRecord& r) {
  return {{"step", r.step},
          {"phase", r.phase},
          {"learning_rate", r.learning_rate},
          {"total", r.total},
          {"objective", r.objective},
          {"stealth_penalty", r.stealth_penalty},
          {"clean_rate", r.clean_rate},
          {"clean_distortion", r.clean_distortion},
          {"poisoned_rate", r.poisoned_rate},
          {"poisoned_distortion", r.poisoned_distortion},
          {"poisoned_psnr", r.poisoned_psnr},
          {"downstream", r.downstream},
          {"trigger_mse", r.trigger_mse}};
}

StepLogger curve_logger(const fs::path& path) {
  std::error_code ec;
  fs::remove(path, ec);
  return [path](const StepRecord& r) {
    io::append_record(path, record_json(r));
    std::cerr << "  " << r.phase << " " << r.step << " total " << r.total << " objective "
              << r.objective << "\n";
  };
}

json summarize(const std::vector<ImageRow>& rows) {
  double bpp = 0, psnr = 0, mse = 0;
  for (const auto& r : rows) {
    bpp += r.bpp;
    psnr += r.psnr;
    mse += r.trigger_mse;
  }
  const double n = static_cast<double>(rows.size());
  return {{"bpp", bpp / n}, {"psnr_db", psnr / n}, {"trigger_mse", mse / n}, {"images", rows.size()}};
}

io::ImageDataset eval_images(const Run& run, const std::string& input_dir) {
  if (!input_dir.empty()) return io::load_dataset(input_dir, io::Split::kAll, 0.0);
  return io::materialize(run.config.data.main, io::Split::kVal, run.config.data.val_fraction);
}

const io::DataSource& aux_source(const Run& run, const AttackObjectiveSpec& spec) {
  if (spec.aux_dataset.empty()) {
    throw io::ConfigError({"objectives: '" + to_string(spec.kind) + "' needs an aux_dataset"});
  }
  const auto it = run.config.data.aux.find(spec.aux_dataset);
  if (it == run.config.data.aux.end()) {
    throw io::ConfigError({"objectives: unknown aux_dataset '" + spec.aux_dataset + "'"});
  }
  return it->second;
}

// Train/test halves of a labelled corpus, split by the filename hash rule.
struct LabelledSplit {
  torch::Tensor train_images, train_labels, test_images, test_labels;
};

LabelledSplit split_corpus(const io::SyntheticCorpus& corpus, double val_fraction) {
  std::vector<int64_t> train, test;
  for (int64_t i = 0; i < corpus.images.size(0); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05lld.png", static_cast<long long>(i));
    (io::in_validation_split(name, val_fraction) ? test : train).push_back(i);
  }
  if (train.empty() || test.empty()) throw Error(ErrorKind::kDataset, "labelled corpus split is empty");
  const auto ti = torch::tensor(train, torch::kLong);
  const auto vi = torch::tensor(test, torch::kLong);
  return {corpus.images.index_select(0, ti), corpus.labels.index_select(0, ti),
          corpus.images.index_select(0, vi), corpus.labels.index_select(0, vi)};
}

double split_fraction(const Run& run) {
  return run.config.data.val_fraction > 0 ? run.config.data.val_fraction : 0.2;
}

Segmenter obtain_segmenter(Run& run, const AttackObjectiveSpec& spec, const std::string& path) {
  if (!path.empty()) {
    run.manifest.inputs["segmenter"] = path;
    return io::load_segmenter(path);
  }
  const auto corpus = io::materialize_corpus(aux_source(run, spec));
  if (!corpus.labels.defined() || corpus.labels.dim() != 3) {
    throw Error(ErrorKind::kDataset, "segmentation aux dataset has no label maps");
  }
  const auto split = split_corpus(corpus, split_fraction(run));
  auto result = train_toy_segmenter(split.train_images, split.train_labels,
                                    run.config.downstream.segmenter, run.config.downstream.train);
  const double test_acc = pixel_accuracy(result.model, split.test_images, split.test_labels);
  const auto out = run.file("segmenter.ckpt");
  io::save_segmenter(out, result.model);
  run.manifest.outputs["segmenter"] = out.string();
  run.manifest.metrics["segmenter_test_accuracy"] = test_acc;
  std::cerr << "  toy segmenter pixel accuracy " << test_acc << "\n";
  return result.model;
}

std::pair<torch::Tensor, torch::Tensor> face_pairs(const torch::Tensor& images,
                                                   const torch::Tensor& ids) {
  const auto pairs = genuine_pairs(ids);
  if (pairs.empty()) throw Error(ErrorKind::kDataset, "face corpus has no genuine pairs");
  std::vector<int64_t> a, b;
  for (const auto& [i, j] : pairs) {
    a.push_back(i);
    b.push_back(j);
  }
  return {images.index_select(0, torch::tensor(a, torch::kLong)),
          images.index_select(0, torch::tensor(b, torch::kLong))};
}

torch::Tensor pipeline_cosines(HyperpriorCodec& codec, Embedder& embedder, const torch::Tensor& a,
                               const torch::Tensor& b) {
  torch::NoGradGuard no_grad;
  const auto fa = codec->forward(a, QuantMode::kEvalRound).x_hat.clamp(0.0, 1.0);
  const auto fb = codec->forward(b, QuantMode::kEvalRound).x_hat.clamp(0.0, 1.0);
  return cosine_similarity_checked(embedder->embed(fa), embedder->embed(fb));
}

Embedder obtain_embedder(Run& run, const AttackObjectiveSpec& spec, HyperpriorCodec& codec,
                         const std::string& path, double* threshold) {
  if (!path.empty()) {
    run.manifest.inputs["embedder"] = path;
    return io::load_embedder(path, threshold);
  }
  const auto corpus = io::materialize_corpus(aux_source(run, spec));
  if (!corpus.labels.defined() || corpus.labels.dim() != 1) {
    throw Error(ErrorKind::kDataset, "face aux dataset has no identity labels");
  }
  const auto split = split_corpus(corpus, split_fraction(run));
  auto result = train_toy_embedder(split.train_images, split.train_labels,
                                   run.config.downstream.embedder, run.config.downstream.train);
  const auto pairs = face_pairs(split.train_images, split.train_labels);
  *threshold = calibrate_match_threshold(pipeline_cosines(codec, result.model, pairs.first, pairs.second),
                                         run.config.downstream.match_accept_fraction);
  const auto out = run.file("embedder.ckpt");
  io::save_embedder(out, result.model, *threshold);
  run.manifest.outputs["embedder"] = out.string();
  run.manifest.metrics["embedder_threshold"] = *threshold;
  std::cerr << "  toy embedder threshold " << *threshold << "\n";
  return result.model;
}

DownstreamBinding bind_downstream(Run& run, const AttackObjectiveSpec& spec, HyperpriorCodec& codec,
                                  const std::string& segmenter, const std::string& embedder) {
  DownstreamBinding binding;
  binding.mask_dilation = run.config.downstream.mask_dilation;
  if (spec.kind == ObjectiveKind::kSegTargeted) binding.segmenter = obtain_segmenter(run, spec, segmenter);
  if (spec.kind == ObjectiveKind::kFaceDeid) {
    double threshold = 0.0;
    binding.embedder = obtain_embedder(run, spec, codec, embedder, &threshold);
  }
  return binding;
}

AuxDatasets load_aux(const Run& run) {
  AuxDatasets aux;
  for (const auto& [name, src] : run.config.data.aux) aux[name] = io::materialize(src, io::Split::kAll, 0.0);
  return aux;
}

json attack_metrics(HyperpriorCodec& vanilla, HyperpriorCodec& attacked, TriggerGenerator& trigger,
                    const io::ImageDataset& val) {
  const auto images = val.stacked();
  return {{"vanilla", summarize(code_images(vanilla, images, val.names()))},
          {"clean", summarize(code_images(attacked, images, val.names()))},
          {"poisoned", summarize(code_images(attacked, images, val.names(), &trigger))}};
}

// ---------------------------------------------------------------- commands

struct Common {
  std::string config;
};

io::ExperimentConfig read_config(const Common& c) {
  return io::parse_config(accept_manifest_or_config(c.config));
}

int cmd_synth(const std::string& kind, int64_t count, int64_t size, uint64_t seed,
              int64_t identities, const std::string& out) {
  const auto corpus =
      io::synth_corpus(io::parse_corpus_kind(kind), count, size, seed, io::FaceCorpusOptions{identities});
  io::write_dataset(out, corpus.images, corpus.labels);
  std::cerr << "[synth] wrote " << count << " " << kind << " images to " << out << "\n";
  return kExitOk;
}

void cmd_train_vanilla(Run& run) {
  const auto& c = run.config;
  const auto train = io::materialize(c.data.main, io::Split::kTrain, c.data.val_fraction);
  const auto val = io::materialize(c.data.main, io::Split::kVal, c.data.val_fraction);
  run.manifest.inputs["train_images"] = train.size();
  run.manifest.inputs["val_images"] = val.size();
  const std::string tag = "q" + std::to_string(c.codec.quality);
  auto result = vanilla_train(train, val, c.codec, c.train, curve_logger(run.file("vanilla_" + tag + "_curve.jsonl")));
  const auto ckpt = run.file("codec_" + tag + ".ckpt");
  io::save_codec(ckpt, result.codec, c.seed);
  run.manifest.outputs["codec"] = ckpt.string();
  run.manifest.metrics["best_val_loss"] = result.best_val_loss;
  run.manifest.metrics["initial_val_loss"] = result.initial_val_loss;
  run.manifest.metrics["best_epoch"] = result.best_epoch;
  run.manifest.metrics["val"] = summarize(code_images(result.codec, val.stacked(), val.names()));
}

void cmd_attack(Run& run, const std::string& codec_path, const std::string& objective,
                const std::string& segmenter, const std::string& embedder) {
  const auto& c = run.config;
  AttackObjectiveSpec spec;
  if (!objective.empty()) {
    ObjectiveKind kind;
    try {
      kind = parse_objective_kind(objective);
    } catch (const Error& e) {
      throw io::ConfigError({std::string("--objective: ") + e.what()});
    }
    bool found = false;
    for (const auto& p : c.objectives) {
      if (p.spec.kind == kind) {
        spec = p.spec;
        found = true;
      }
    }
    if (!found) {
      spec = AttackObjectiveSpec::defaults_for(kind);
      spec.epsilon = c.trigger.epsilon;
      if (kind == ObjectiveKind::kSegTargeted || kind == ObjectiveKind::kFaceDeid) {
        const auto want = kind == ObjectiveKind::kSegTargeted ? io::CorpusKind::kShapes : io::CorpusKind::kFacesToy;
        for (const auto& [name, src] : c.data.aux) {
          if (src.synthetic && src.kind == want) spec.aux_dataset = name;
        }
      }
    }
  } else if (!c.objectives.empty()) {
    spec = c.objectives.front().spec;
  } else {
    throw io::ConfigError({"objectives: attack needs --objective or one configured objective"});
  }
  run.manifest.run_id = "attack-" + to_string(spec.kind) + "-s" + std::to_string(c.seed);
  run.manifest.inputs["codec"] = codec_path;
  run.manifest.inputs["objective"] = {{"kind", to_string(spec.kind)},
                                      {"alpha", spec.alpha},
                                      {"beta", spec.beta},
                                      {"gamma", spec.gamma},
                                      {"epsilon", spec.epsilon}};

  auto vanilla = io::load_codec(codec_path);
  auto codec = io::load_codec(codec_path);
  const auto binding = bind_downstream(run, spec, vanilla, segmenter, embedder);
  const auto main = io::materialize(c.data.main, io::Split::kTrain, c.data.val_fraction);
  const auto val = io::materialize(c.data.main, io::Split::kVal, c.data.val_fraction);
  const auto kind = to_string(spec.kind);
  auto result = finetune_attack(codec, spec, main, load_aux(run), c.train, c.trigger, binding,
                                curve_logger(run.file("attack_" + kind + "_curve.jsonl")));
  const auto codec_out = run.file("codec_attacked_" + kind + ".ckpt");
  const auto trigger_out = run.file("trigger_" + kind + ".ckpt");
  io::save_codec(codec_out, codec, c.seed);
  io::save_trigger(trigger_out, result.trigger, kind);
  run.manifest.outputs["codec"] = codec_out.string();
  run.manifest.outputs["trigger"] = trigger_out.string();
  run.manifest.metrics["freeze_audit"] = result.freeze.passed ? "passed" : "failed";
  run.manifest.metrics["rd"] = attack_metrics(vanilla, codec, result.trigger, val);
}

void cmd_attack_multi(Run& run, const std::string& codec_path, const std::string& segmenter,
                      const std::string& embedder) {
  const auto& c = run.config;
  MultiTriggerPlan plan;
  for (const auto& p : c.objectives) plan.objectives.push_back(p);
  if (plan.objectives.empty()) throw io::ConfigError({"objectives: attack-multi needs at least one objective"});
  run.manifest.inputs["codec"] = codec_path;
  auto vanilla = io::load_codec(codec_path);
  auto codec = io::load_codec(codec_path);
  DownstreamBinding binding;
  binding.mask_dilation = c.downstream.mask_dilation;
  for (const auto& p : plan.objectives) {
    const auto b = bind_downstream(run, p.spec, vanilla, segmenter, embedder);
    if (b.segmenter) binding.segmenter = b.segmenter;
    if (b.embedder) binding.embedder = b.embedder;
  }
  const auto main = io::materialize(c.data.main, io::Split::kTrain, c.data.val_fraction);
  const auto val = io::materialize(c.data.main, io::Split::kVal, c.data.val_fraction);
  auto result = multi_trigger_train(codec, plan, main, load_aux(run), c.train, c.trigger, binding,
                                    curve_logger(run.file("attack_multi_curve.jsonl")));
  const auto codec_out = run.file("codec_attacked_multi.ckpt");
  io::save_codec(codec_out, codec, c.seed);
  run.manifest.outputs["codec"] = codec_out.string();
  run.manifest.metrics["freeze_audit"] = result.freeze.passed ? "passed" : "failed";
  run.manifest.metrics["partition_violations"] = result.partition_violations;
  for (size_t i = 0; i < plan.objectives.size(); ++i) {
    const auto kind = to_string(plan.objectives[i].spec.kind);
    const auto trigger_out = run.file("trigger_multi_" + kind + ".ckpt");
    io::save_trigger(trigger_out, result.triggers[i], kind);
    run.manifest.outputs["trigger_" + kind] = trigger_out.string();
    run.manifest.metrics["rd_" + kind] = attack_metrics(vanilla, codec, result.triggers[i], val);
  }
}

void cmd_inject(Run& run, const std::string& trigger_path, const std::string& input,
                const std::string& out_dir) {
  torch::NoGradGuard no_grad;
  auto trigger = io::load_trigger(trigger_path);
  const auto data = eval_images(run, input);
  run.manifest.inputs["trigger"] = trigger_path;
  double mem_mse = 0, file_mse = 0, gap = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto x = data.image(i).unsqueeze(0);
    const auto x_p = trigger->inject(x, ClipMode::kClip).x_p;
    const auto q = io::quantize_8bit(x_p);
    io::write_png(fs::path(out_dir) / data.name(i), q.squeeze(0));
    mem_mse += torch::square(x_p - x).mean().item<double>();
    file_mse += torch::square(q - x).mean().item<double>();
    gap += torch::square(q - x_p).mean().item<double>();
  }
  const double n = static_cast<double>(data.size());
  run.manifest.outputs["poisoned_dir"] = out_dir;
  run.manifest.metrics["images"] = data.size();
  run.manifest.metrics["trigger_mse_in_memory"] = mem_mse / n;
  run.manifest.metrics["trigger_mse_8bit"] = file_mse / n;
  run.manifest.metrics["quantization_gap_mse"] = gap / n;
}

void cmd_eval_rd(Run& run, const std::vector<std::string>& codecs, const std::string& trigger_path,
                 const std::string& poisoned_dir, const std::string& input) {
  const auto data = eval_images(run, input);
  const auto images = data.stacked();
  std::vector<QualityCodec> list;
  for (const auto& p : codecs) {
    QualityCodec qc;
    qc.codec = io::load_codec(p);
    qc.quality = qc.codec->config().quality;
    if (!trigger_path.empty()) qc.trigger = io::load_trigger(trigger_path);
    list.push_back(qc);
  }
  run.manifest.inputs["codecs"] = codecs;
  if (!trigger_path.empty()) run.manifest.inputs["trigger"] = trigger_path;
  auto rows = rd_curve(list, images, data.names(), !trigger_path.empty());
  if (!poisoned_dir.empty()) {
    run.manifest.inputs["poisoned_dir"] = poisoned_dir;
    std::vector<torch::Tensor> poisoned;
    for (const auto& name : data.names()) poisoned.push_back(io::read_png(fs::path(poisoned_dir) / name));
    const auto inputs = torch::stack(poisoned).slice(2, 0, images.size(2)).slice(3, 0, images.size(3));
    std::vector<RdRow> file_rows;
    for (auto& qc : list) {
      RdRow r;
      r.quality = qc.quality;
      r.mode = "poisoned-file";
      r.images = code_inputs(qc.codec, inputs, images, data.names(), run.config.eval.batch_size);
      const auto s = summarize(r.images);
      r.bpp = s["bpp"];
      r.psnr = s["psnr_db"];
      file_rows.push_back(std::move(r));
    }
    for (auto& r : file_rows) rows.push_back(std::move(r));
    std::stable_sort(rows.begin(), rows.end(), [](const RdRow& a, const RdRow& b) { return a.quality < b.quality; });
  }
  const auto path = write_rd_report(run.report(), rows);
  run.manifest.outputs["table"] = path.string();
  json agg = json::array();
  for (const auto& r : rows) agg.push_back({{"quality", r.quality}, {"mode", r.mode}, {"bpp", r.bpp}, {"psnr_db", r.psnr}});
  run.manifest.metrics["rows"] = agg;
}

AttackObjectiveSpec objective_of(const Run& run, ObjectiveKind kind) {
  for (const auto& p : run.config.objectives) {
    if (p.spec.kind == kind) return p.spec;
  }
  auto spec = AttackObjectiveSpec::defaults_for(kind);
  const auto want = kind == ObjectiveKind::kSegTargeted ? io::CorpusKind::kShapes : io::CorpusKind::kFacesToy;
  for (const auto& [name, src] : run.config.data.aux) {
    if (src.synthetic && src.kind == want) spec.aux_dataset = name;
  }
  return spec;
}

void cmd_eval_asr(Run& run, const std::string& codec_path, const std::string& trigger_path,
                  const std::string& segmenter_path) {
  const auto spec = objective_of(run, ObjectiveKind::kSegTargeted);
  auto codec = io::load_codec(codec_path);
  auto trigger = io::load_trigger(trigger_path);
  auto segmenter = io::load_segmenter(segmenter_path);
  const auto corpus = io::materialize_corpus(aux_source(run, spec));
  const auto test = split_corpus(corpus, split_fraction(run)).test_images;
  const auto r = evaluate_segmentation_attack(codec, trigger, segmenter, test, spec.source_class,
                                              spec.target_class, run.config.downstream.mask_dilation,
                                              run.config.eval.batch_size);
  run.manifest.inputs = json{{"codec", codec_path}, {"trigger", trigger_path}, {"segmenter", segmenter_path}};
  run.manifest.metrics = json{{"asr", r.asr ? json(*r.asr) : json(nullptr)},
                          {"converted_pixels", r.converted},
                          {"source_pixels", r.source_pixels},
                          {"outside_mask_mse", r.outside_mask_mse},
                          {"clean_psnr_db", r.clean_psnr}};
  run.manifest.outputs["summary"] = write_summary(run.report(), "asr", run.manifest.metrics).string();
}

void cmd_eval_face(Run& run, const std::string& codec_path, const std::string& trigger_path,
                   const std::string& embedder_path) {
  const auto spec = objective_of(run, ObjectiveKind::kFaceDeid);
  auto codec = io::load_codec(codec_path);
  auto trigger = io::load_trigger(trigger_path);
  double threshold = 0.0;
  auto embedder = io::load_embedder(embedder_path, &threshold);
  const auto corpus = io::materialize_corpus(aux_source(run, spec));
  const auto split = split_corpus(corpus, split_fraction(run));
  const auto pairs = face_pairs(split.test_images, split.test_labels);
  const auto r = evaluate_face_attack(codec, trigger, embedder, pairs.first, pairs.second, threshold);
  run.manifest.inputs = json{{"codec", codec_path}, {"trigger", trigger_path}, {"embedder", embedder_path}};
  run.manifest.metrics = json{{"threshold", r.threshold},
                          {"pairs", r.pairs},
                          {"clean_accuracy", r.clean_accuracy},
                          {"deidentified_fraction", r.deidentified},
                          {"mean_clean_cosine", r.mean_clean_cosine},
                          {"mean_attacked_cosine", r.mean_attacked_cosine}};
  run.manifest.outputs["summary"] = write_summary(run.report(), "face", run.manifest.metrics).string();
}

void cmd_defend_sweep(Run& run, const std::string& codec_path, const std::string& trigger_path,
                      const std::string& input) {
  auto codec = io::load_codec(codec_path);
  auto trigger = io::load_trigger(trigger_path);
  const auto images = eval_images(run, input).stacked();
  const auto rows = defense_sweep(codec, trigger, images, run.config.eval.defense_grid(),
                                  run.config.eval.amplifications);
  run.manifest.inputs = json{{"codec", codec_path}, {"trigger", trigger_path}};
  run.manifest.outputs["table"] = write_defense_report(run.report(), rows).string();
  json agg = json::array();
  for (const auto& r : rows) {
    agg.push_back({{"defense", r.setting.label()},
                   {"amplification", r.amplification},
                   {"clean_psnr_db", r.clean_psnr},
                   {"attacked_psnr_db", r.attacked_psnr}});
  }
  run.manifest.metrics["rows"] = agg;
}

void cmd_report(Run& run) {
  json runs = json::array();
  std::ostringstream md;
  md << "# licbd report\n\nconfig `" << run.hash.substr(0, 12) << "`, seed " << run.config.seed
     << "\n\n" << kBppNote << ".\n\n| command | status | wall s | manifest |\n|---|---|---|---|\n";
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(run.out)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("manifest_", 0) == 0 && entry.path().extension() == ".json" &&
        name.find("manifest_report-") != 0) {
      manifests.push_back(entry.path());
    }
  }
  std::sort(manifests.begin(), manifests.end());
  for (const auto& p : manifests) {
    const auto m = io::read_manifest(p);
    runs.push_back(io::to_json(m));
    md << "| " << m.command << " | " << m.status << " | " << m.wall_seconds << " | "
       << p.filename().string() << " |\n";
  }
  for (const auto& r : runs) {
    if (r["metrics"].empty()) continue;
    md << "\n## " << r["command"].get<std::string>() << "\n\n```\n" << r["metrics"].dump(2) << "\n```\n";
  }
  const auto md_path = report_path(run.report(), "report", "md");
  io::atomic_write_text(md_path, md.str());
  run.manifest.outputs["markdown"] = md_path.string();
  run.manifest.outputs["summary"] = write_summary(run.report(), "report", {{"runs", runs}}).string();
  run.manifest.metrics["runs"] = runs.size();
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Backdoor attacks on learned image compression, at desk scale"};
  app.require_subcommand(1);
  Common common;
  std::string codec_path, trigger_path, segmenter_path, embedder_path, objective, input, out_dir,
      poisoned_dir;
  std::vector<std::string> codecs;
  std::optional<int> quality;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "experiment config (JSON) or a run manifest")
        ->required()
        ->check(CLI::ExistingFile);
  };

  std::string synth_kind = "natural-noise", synth_out;
  int64_t synth_count = 100, synth_size = 64, synth_ids = 20;
  uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus as PNG files");
  synth->add_option("--kind", synth_kind, "natural-noise | shapes | faces-toy");
  synth->add_option("--count", synth_count)->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--identities", synth_ids)->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out)->required();

  auto* train = app.add_subcommand("train-vanilla", "train a clean codec");
  add_config(train);
  train->add_option("--quality", quality, "override codec.quality (1..8)");

  auto* attack = app.add_subcommand("attack", "finetune the encoder and one trigger");
  add_config(attack);
  attack->add_option("--codec", codec_path)->required()->check(CLI::ExistingFile);
  attack->add_option("--objective", objective, "bpp | psnr | seg | face");
  attack->add_option("--segmenter", segmenter_path)->check(CLI::ExistingFile);
  attack->add_option("--embedder", embedder_path)->check(CLI::ExistingFile);

  auto* multi = app.add_subcommand("attack-multi", "finetune the encoder with one trigger per objective");
  add_config(multi);
  multi->add_option("--codec", codec_path)->required()->check(CLI::ExistingFile);
  multi->add_option("--segmenter", segmenter_path)->check(CLI::ExistingFile);
  multi->add_option("--embedder", embedder_path)->check(CLI::ExistingFile);

  auto* inject = app.add_subcommand("inject", "write poisoned images as 8-bit PNG");
  add_config(inject);
  inject->add_option("--trigger", trigger_path)->required()->check(CLI::ExistingFile);
  inject->add_option("--input", input, "image directory (default: main validation split)");
  inject->add_option("--out", out_dir)->required();

  auto* eval_rd = app.add_subcommand("eval-rd", "rate-distortion table, one row per quality");
  add_config(eval_rd);
  eval_rd->add_option("--codec", codecs)->required()->check(CLI::ExistingFile);
  eval_rd->add_option("--trigger", trigger_path, "add in-memory poisoned rows")->check(CLI::ExistingFile);
  eval_rd->add_option("--poisoned", poisoned_dir, "add rows for poisoned images read from disk")
      ->check(CLI::ExistingDirectory);
  eval_rd->add_option("--input", input, "image directory (default: main validation split)");

  auto* eval_asr = app.add_subcommand("eval-asr", "pixel-wise attack success on the toy segmenter");
  add_config(eval_asr);
  eval_asr->add_option("--codec", codec_path)->required()->check(CLI::ExistingFile);
  eval_asr->add_option("--trigger", trigger_path)->required()->check(CLI::ExistingFile);
  eval_asr->add_option("--segmenter", segmenter_path)->required()->check(CLI::ExistingFile);

  auto* eval_face = app.add_subcommand("eval-face", "face match accuracy and de-identification rate");
  add_config(eval_face);
  eval_face->add_option("--codec", codec_path)->required()->check(CLI::ExistingFile);
  eval_face->add_option("--trigger", trigger_path)->required()->check(CLI::ExistingFile);
  eval_face->add_option("--embedder", embedder_path)->required()->check(CLI::ExistingFile);

  auto* defend = app.add_subcommand("defend-sweep", "blur and bit-depth defenses, with amplification");
  add_config(defend);
  defend->add_option("--codec", codec_path)->required()->check(CLI::ExistingFile);
  defend->add_option("--trigger", trigger_path)->required()->check(CLI::ExistingFile);
  defend->add_option("--input", input, "image directory (default: main validation split)");

  auto* report = app.add_subcommand("report", "collect manifests of the output directory");
  add_config(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (synth->parsed()) {
    try {
      return cmd_synth(synth_kind, synth_count, synth_size, synth_seed, synth_ids, synth_out);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return e.kind() == ErrorKind::kConfig ? kExitConfig : kExitRuntime;
    }
  }

  const auto* sub = app.get_subcommands().front();
  io::ExperimentConfig config;
  try {
    config = read_config(common);
    if (quality) {
      if (*quality < 1 || *quality > 8) throw io::ConfigError({"--quality: must be in 1..8"});
      config.codec.quality = *quality;
      config.codec.lambda = lambda_for_quality(*quality);
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  }

  std::optional<Run> run;
  try {
    run.emplace(start_run(sub->get_name(), config));
    if (train->parsed()) cmd_train_vanilla(*run);
    if (attack->parsed()) cmd_attack(*run, codec_path, objective, segmenter_path, embedder_path);
    if (multi->parsed()) cmd_attack_multi(*run, codec_path, segmenter_path, embedder_path);
    if (inject->parsed()) cmd_inject(*run, trigger_path, input, out_dir);
    if (eval_rd->parsed()) cmd_eval_rd(*run, codecs, trigger_path, poisoned_dir, input);
    if (eval_asr->parsed()) cmd_eval_asr(*run, codec_path, trigger_path, segmenter_path);
    if (eval_face->parsed()) cmd_eval_face(*run, codec_path, trigger_path, embedder_path);
    if (defend->parsed()) cmd_defend_sweep(*run, codec_path, trigger_path, input);
    if (report->parsed()) cmd_report(*run);
    finish(*run, "ok");
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool config_error = e.kind() == ErrorKind::kConfig;
    if (run) {
      try {
        finish(*run, config_error ? "invalid-config" : "failed", e.what());
      } catch (const std::exception&) {
      }
    }
    return config_error ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (run) {
      try {
        finish(*run, "failed", e.what());
      } catch (const std::exception&) {
      }
    }
    return kExitRuntime;
  }
}

}  // namespace licbd::cli
