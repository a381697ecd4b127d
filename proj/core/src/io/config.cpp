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

#include "licbd/io/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "licbd/errors.hpp"
#include "licbd/hashing.hpp"
#include "licbd/io/files.hpp"
#include "licbd/io/image_io.hpp"

namespace licbd::io {
namespace {

using nlohmann::json;

class Reader {
 public:
  explicit Reader(std::vector<std::string>& errors) : errors_(errors) {}

  void error(const std::string& path, const std::string& message) {
    errors_.push_back(path + ": " + message);
  }

  bool object(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
      error(path, "expected an object");
      return false;
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
      if (!allowed.count(k)) error(join(path, k), "unknown key");
    }
    return true;
  }

  void read(const json& j, const std::string& path, const char* key, int64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) return error(join(path, key), "expected an integer");
    out = v.get<int64_t>();
  }
  void read(const json& j, const std::string& path, const char* key, int& out) {
    int64_t v = out;
    read(j, path, key, v);
    out = static_cast<int>(v);
  }
  void read(const json& j, const std::string& path, const char* key, uint64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)) {
      return error(join(path, key), "expected a nonnegative integer");
    }
    out = v.get<uint64_t>();
  }
  void read(const json& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) return error(join(path, key), "expected a number");
    out = v.get<double>();
  }
  void read(const json& j, const std::string& path, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_boolean()) return error(join(path, key), "expected a boolean");
    out = v.get<bool>();
  }
  void read(const json& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_string()) return error(join(path, key), "expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  void read(const json& j, const std::string& path, const char* key, std::vector<T>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array()) return error(join(path, key), "expected an array");
    std::vector<T> values;
    for (size_t i = 0; i < v.size(); ++i) {
      T item{};
      json wrapper = {{"v", v[i]}};
      const size_t before = errors_.size();
      read(wrapper, join(path, key) + "[" + std::to_string(i) + "]", "v", item);
      if (errors_.size() == before) values.push_back(item);
    }
    out = std::move(values);
  }

  // Runs a library validator and records its message instead of throwing.
  template <typename F>
  void check(const std::string& path, F&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      error(path, e.what());
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::vector<std::string>& errors_;
};

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kGdn: return "gdn";
    case Activation::kRelu: return "relu";
    case Activation::kNone: return "none";
  }
  return "gdn";
}

DataSource parse_source(Reader& r, const json& j, const std::string& path) {
  DataSource s;
  if (j.is_string()) {
    s.path = j.get<std::string>();
    return s;
  }
  if (!r.object(j, path, {"path", "synthetic", "count", "size", "seed", "identities"})) return s;
  r.read(j, path, "path", s.path);
  std::string kind;
  r.read(j, path, "synthetic", kind);
  if (!kind.empty()) {
    s.synthetic = true;
    r.check(Reader::join(path, "synthetic"), [&] { s.kind = parse_corpus_kind(kind); });
  }
  r.read(j, path, "count", s.count);
  r.read(j, path, "size", s.size);
  r.read(j, path, "seed", s.seed);
  r.read(j, path, "identities", s.identities);
  if (s.synthetic == !s.path.empty()) r.error(path, "give exactly one of 'path' or 'synthetic'");
  if (s.synthetic && s.count <= 0) r.error(Reader::join(path, "count"), "must be positive");
  if (s.synthetic && s.size <= 0) r.error(Reader::join(path, "size"), "must be positive");
  if (s.synthetic && s.identities <= 0) r.error(Reader::join(path, "identities"), "must be positive");
  return s;
}

json source_json(const DataSource& s) {
  if (!s.synthetic) return {{"path", s.path}};
  return {{"synthetic", to_string(s.kind)}, {"count", s.count},      {"size", s.size},
          {"seed", s.seed},                 {"identities", s.identities}};
}

LossVariant parse_variant(const std::string& s) {
  if (s == "static") return LossVariant::kStatic;
  if (s == "dynamic") return LossVariant::kDynamic;
  throw_config("unknown loss variant '" + s + "' (expected static|dynamic)");
}

std::string variant_name(LossVariant v) { return v == LossVariant::kStatic ? "static" : "dynamic"; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : Error(ErrorKind::kConfig,
            [&] {
              std::string m = "invalid configuration:";
              for (const auto& d : diagnostics) m += "\n  " + d;
              return m;
            }()),
      diagnostics_(std::move(diagnostics)) {}

std::vector<DefenseSetting> EvalConfig::defense_grid() const {
  std::vector<DefenseSetting> grid;
  for (const double s : blur_sigmas) grid.push_back({DefenseKind::kBlur, s});
  for (const int64_t d : squeeze_depths) grid.push_back({DefenseKind::kSqueeze, static_cast<double>(d)});
  return grid;
}

ExperimentConfig parse_config(const json& j) {
  std::vector<std::string> errors;
  Reader r(errors);
  ExperimentConfig c;
  if (!r.object(j, "config", {"seed", "output_dir", "data", "codec", "trigger", "objectives",
                              "train", "downstream", "eval"})) {
    throw ConfigError(errors);
  }
  r.read(j, "config", "seed", c.seed);
  r.read(j, "config", "output_dir", c.output_dir);

  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (r.object(d, "data", {"main", "aux", "val_fraction"})) {
      if (d.contains("main")) c.data.main = parse_source(r, d.at("main"), "data.main");
      if (d.contains("aux")) {
        if (!d.at("aux").is_object()) {
          r.error("data.aux", "expected an object of named sources");
        } else {
          for (const auto& [name, src] : d.at("aux").items()) {
            c.data.aux[name] = parse_source(r, src, "data.aux." + name);
          }
        }
      }
      r.read(d, "data", "val_fraction", c.data.val_fraction);
      if (!(c.data.val_fraction >= 0.0 && c.data.val_fraction < 1.0)) {
        r.error("data.val_fraction", "must be in [0, 1)");
      }
    }
  } else {
    r.error("data", "missing required section");
  }

  if (j.contains("codec")) {
    const auto& k = j.at("codec");
    if (r.object(k, "codec", {"quality", "lambda", "hidden_channels", "latent_channels",
                              "hyper_channels", "stages", "kernel", "activation"})) {
      r.read(k, "codec", "quality", c.codec.quality);
      if (c.codec.quality < 1 || c.codec.quality > 8) {
        r.error("codec.quality", "must be in 1..8");
      } else {
        c.codec.lambda = lambda_for_quality(c.codec.quality);
      }
      r.read(k, "codec", "lambda", c.codec.lambda);
      r.read(k, "codec", "hidden_channels", c.codec.hidden_channels);
      r.read(k, "codec", "latent_channels", c.codec.latent_channels);
      r.read(k, "codec", "hyper_channels", c.codec.hyper_channels);
      r.read(k, "codec", "stages", c.codec.stages);
      r.read(k, "codec", "kernel", c.codec.kernel);
      std::string act = activation_name(c.codec.activation);
      r.read(k, "codec", "activation", act);
      if (act == "gdn") c.codec.activation = Activation::kGdn;
      else if (act == "relu") c.codec.activation = Activation::kRelu;
      else if (act == "none") c.codec.activation = Activation::kNone;
      else r.error("codec.activation", "expected gdn|relu|none");
    }
  }
  if (!(c.codec.lambda > 0)) r.error("codec.lambda", "must be > 0");
  if (c.codec.hidden_channels <= 0 || c.codec.latent_channels <= 0 || c.codec.hyper_channels <= 0 ||
      c.codec.stages <= 0 || c.codec.kernel <= 0 || c.codec.kernel % 2 == 0) {
    r.error("codec", "channel counts and stages must be positive and the kernel odd");
  }

  if (j.contains("trigger")) {
    const auto& t = j.at("trigger");
    if (r.object(t, "trigger", {"block", "top_k", "band", "epsilon", "use_topk",
                                "use_patch_weights", "weight_net_channels"})) {
      r.read(t, "trigger", "block", c.trigger.block);
      r.read(t, "trigger", "top_k", c.trigger.top_k);
      r.read(t, "trigger", "band", c.trigger.band);
      r.read(t, "trigger", "epsilon", c.trigger.epsilon);
      r.read(t, "trigger", "use_topk", c.trigger.use_topk);
      r.read(t, "trigger", "use_patch_weights", c.trigger.use_patch_weights);
      r.read(t, "trigger", "weight_net_channels", c.trigger.weight_net_channels);
    }
  }
  r.check("trigger", [&] { c.trigger.validate(); });
  if (!(c.trigger.epsilon > 0)) r.error("trigger.epsilon", "must be > 0");

  if (j.contains("objectives")) {
    const auto& list = j.at("objectives");
    if (!list.is_array()) {
      r.error("objectives", "expected an array");
    } else {
      for (size_t i = 0; i < list.size(); ++i) {
        const std::string path = "objectives[" + std::to_string(i) + "]";
        const auto& o = list[i];
        if (!r.object(o, path, {"kind", "variant", "alpha", "beta", "gamma", "epsilon", "weight",
                                "aux_dataset", "source_class", "target_class"})) {
          continue;
        }
        if (!o.contains("kind")) {
          r.error(path + ".kind", "missing required key");
          continue;
        }
        std::string kind;
        r.read(o, path, "kind", kind);
        PlannedObjective p;
        try {
          p.spec = AttackObjectiveSpec::defaults_for(parse_objective_kind(kind));
        } catch (const Error& e) {
          r.error(path + ".kind", e.what());
          continue;
        }
        p.spec.epsilon = c.trigger.epsilon;
        std::string variant = variant_name(p.spec.variant);
        r.read(o, path, "variant", variant);
        r.check(path + ".variant", [&] { p.spec.variant = parse_variant(variant); });
        r.read(o, path, "alpha", p.spec.alpha);
        r.read(o, path, "beta", p.spec.beta);
        r.read(o, path, "gamma", p.spec.gamma);
        r.read(o, path, "epsilon", p.spec.epsilon);
        r.read(o, path, "weight", p.weight);
        r.read(o, path, "aux_dataset", p.spec.aux_dataset);
        r.read(o, path, "source_class", p.spec.source_class);
        r.read(o, path, "target_class", p.spec.target_class);
        r.check(path, [&] { p.spec.validate(); });
        if (!(p.weight > 0)) r.error(path + ".weight", "must be > 0");
        if (!p.spec.aux_dataset.empty() && !c.data.aux.count(p.spec.aux_dataset)) {
          r.error(path + ".aux_dataset", "no data.aux entry named '" + p.spec.aux_dataset + "'");
        }
        c.objectives.push_back(p);
      }
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (r.object(t, "train", {"batch_size", "patch_size", "learning_rate", "epochs",
                              "steps_per_epoch", "patience", "optimizer", "attack_steps",
                              "attack_learning_rate", "trigger_learning_rate", "grad_clip",
                              "log_every"})) {
      r.read(t, "train", "batch_size", c.train.batch_size);
      r.read(t, "train", "patch_size", c.train.patch_size);
      r.read(t, "train", "learning_rate", c.train.learning_rate);
      r.read(t, "train", "epochs", c.train.epochs);
      r.read(t, "train", "steps_per_epoch", c.train.steps_per_epoch);
      r.read(t, "train", "patience", c.train.patience);
      r.read(t, "train", "optimizer", c.train.optimizer);
      r.read(t, "train", "attack_steps", c.train.attack_steps);
      r.read(t, "train", "attack_learning_rate", c.train.attack_learning_rate);
      r.read(t, "train", "trigger_learning_rate", c.train.trigger_learning_rate);
      r.read(t, "train", "grad_clip", c.train.grad_clip);
      r.read(t, "train", "log_every", c.train.log_every);
    }
  }
  c.train.seed = c.seed;
  r.check("train", [&] { c.train.validate(); });
  if (c.train.log_every <= 0) r.error("train.log_every", "must be positive");
  if (c.train.patch_size % c.codec.stride() != 0) {
    r.error("train.patch_size", "must be a multiple of the codec stride " +
                                    std::to_string(c.codec.stride()));
  }

  if (j.contains("downstream")) {
    const auto& d = j.at("downstream");
    if (r.object(d, "downstream", {"mask_dilation", "epochs", "batch_size", "learning_rate",
                                   "segmenter_width", "embedder_width", "embedding_dim",
                                   "match_accept_fraction"})) {
      r.read(d, "downstream", "mask_dilation", c.downstream.mask_dilation);
      r.read(d, "downstream", "epochs", c.downstream.train.epochs);
      r.read(d, "downstream", "batch_size", c.downstream.train.batch_size);
      r.read(d, "downstream", "learning_rate", c.downstream.train.learning_rate);
      r.read(d, "downstream", "segmenter_width", c.downstream.segmenter.width);
      r.read(d, "downstream", "embedder_width", c.downstream.embedder.width);
      r.read(d, "downstream", "embedding_dim", c.downstream.embedder.dim);
      r.read(d, "downstream", "match_accept_fraction", c.downstream.match_accept_fraction);
    }
  }
  c.downstream.train.seed = c.seed;
  if (c.downstream.mask_dilation < 0) r.error("downstream.mask_dilation", "must be >= 0");
  if (c.downstream.train.epochs < 0 || c.downstream.train.batch_size <= 0 ||
      !(c.downstream.train.learning_rate > 0)) {
    r.error("downstream", "epochs must be >= 0, batch size and learning rate positive");
  }
  if (!(c.downstream.match_accept_fraction > 0 && c.downstream.match_accept_fraction <= 1)) {
    r.error("downstream.match_accept_fraction", "must be in (0, 1]");
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (r.object(e, "eval", {"qualities", "blur_sigmas", "squeeze_depths", "amplifications",
                             "batch_size"})) {
      r.read(e, "eval", "qualities", c.eval.qualities);
      r.read(e, "eval", "blur_sigmas", c.eval.blur_sigmas);
      r.read(e, "eval", "squeeze_depths", c.eval.squeeze_depths);
      r.read(e, "eval", "amplifications", c.eval.amplifications);
      r.read(e, "eval", "batch_size", c.eval.batch_size);
    }
  }
  for (const int q : c.eval.qualities) {
    if (q < 1 || q > 8) r.error("eval.qualities", "quality " + std::to_string(q) + " not in 1..8");
  }
  for (const double s : c.eval.blur_sigmas) {
    if (!(s >= 0)) r.error("eval.blur_sigmas", "sigma must be >= 0");
  }
  for (const int64_t d : c.eval.squeeze_depths) {
    if (d < 1 || d > 8) r.error("eval.squeeze_depths", "depth must be in 1..8");
  }
  for (const double a : c.eval.amplifications) {
    if (!(a > 0)) r.error("eval.amplifications", "factor must be > 0");
  }
  if (c.eval.batch_size <= 0) r.error("eval.batch_size", "must be positive");

  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({"config: " + path.string() + " is not valid JSON: " + e.what()});
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json aux = json::object();
  for (const auto& [name, src] : c.data.aux) aux[name] = source_json(src);
  json objectives = json::array();
  for (const auto& p : c.objectives) {
    objectives.push_back({{"kind", to_string(p.spec.kind)},
                          {"variant", variant_name(p.spec.variant)},
                          {"alpha", p.spec.alpha},
                          {"beta", p.spec.beta},
                          {"gamma", p.spec.gamma},
                          {"epsilon", p.spec.epsilon},
                          {"weight", p.weight},
                          {"aux_dataset", p.spec.aux_dataset},
                          {"source_class", p.spec.source_class},
                          {"target_class", p.spec.target_class}});
  }
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"data", {{"main", source_json(c.data.main)}, {"aux", aux}, {"val_fraction", c.data.val_fraction}}},
      {"codec",
       {{"quality", c.codec.quality},
        {"lambda", c.codec.lambda},
        {"hidden_channels", c.codec.hidden_channels},
        {"latent_channels", c.codec.latent_channels},
        {"hyper_channels", c.codec.hyper_channels},
        {"stages", c.codec.stages},
        {"kernel", c.codec.kernel},
        {"activation", activation_name(c.codec.activation)}}},
      {"trigger",
       {{"block", c.trigger.block},
        {"top_k", c.trigger.top_k},
        {"band", c.trigger.band},
        {"epsilon", c.trigger.epsilon},
        {"use_topk", c.trigger.use_topk},
        {"use_patch_weights", c.trigger.use_patch_weights},
        {"weight_net_channels", c.trigger.weight_net_channels}}},
      {"objectives", objectives},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"patch_size", c.train.patch_size},
        {"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"steps_per_epoch", c.train.steps_per_epoch},
        {"patience", c.train.patience},
        {"optimizer", c.train.optimizer},
        {"attack_steps", c.train.attack_steps},
        {"attack_learning_rate", c.train.attack_learning_rate},
        {"trigger_learning_rate", c.train.trigger_learning_rate},
        {"grad_clip", c.train.grad_clip},
        {"log_every", c.train.log_every}}},
      {"downstream",
       {{"mask_dilation", c.downstream.mask_dilation},
        {"epochs", c.downstream.train.epochs},
        {"batch_size", c.downstream.train.batch_size},
        {"learning_rate", c.downstream.train.learning_rate},
        {"segmenter_width", c.downstream.segmenter.width},
        {"embedder_width", c.downstream.embedder.width},
        {"embedding_dim", c.downstream.embedder.dim},
        {"match_accept_fraction", c.downstream.match_accept_fraction}}},
      {"eval",
       {{"qualities", c.eval.qualities},
        {"blur_sigmas", c.eval.blur_sigmas},
        {"squeeze_depths", c.eval.squeeze_depths},
        {"amplifications", c.eval.amplifications},
        {"batch_size", c.eval.batch_size}}},
  };
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(to_json(config).dump()); }

SyntheticCorpus materialize_corpus(const DataSource& source) {
  if (source.synthetic) {
    return synth_corpus(source.kind, source.count, source.size, source.seed,
                        FaceCorpusOptions{source.identities});
  }
  const auto data = load_dataset(source.path, Split::kAll, 0.0);
  SyntheticCorpus corpus;
  corpus.kind = CorpusKind::kShapes;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> labels;
  for (size_t i = 0; i < data.size(); ++i) {
    images.push_back(data.image(i));
    auto name = data.name(i);
    if (name.rfind("img_", 0) == 0) {
      const auto lbl = std::filesystem::path(source.path) / ("lbl_" + name.substr(4));
      if (std::filesystem::exists(lbl)) labels.push_back(read_label_png(lbl));
    }
  }
  corpus.images = torch::stack(images);
  const auto id_file = std::filesystem::path(source.path) / "identities.csv";
  if (labels.empty() && std::filesystem::exists(id_file)) {
    std::map<std::string, int64_t> ids;
    std::istringstream in(read_text(id_file));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      ids[line.substr(0, comma)] = std::stoll(line.substr(comma + 1));
    }
    std::vector<int64_t> values;
    for (size_t i = 0; i < data.size(); ++i) {
      const auto it = ids.find(data.name(i));
      if (it == ids.end()) {
        throw Error(ErrorKind::kDataset, "no identity for " + data.name(i) + " in " + id_file.string());
      }
      values.push_back(it->second);
    }
    corpus.kind = CorpusKind::kFacesToy;
    corpus.labels = torch::tensor(values, torch::kLong);
    return corpus;
  }
  if (!labels.empty()) {
    if (labels.size() != images.size()) {
      throw Error(ErrorKind::kDataset, "label maps missing for some images in " + source.path);
    }
    corpus.labels = torch::stack(labels);
  } else {
    corpus.kind = CorpusKind::kNaturalNoise;
  }
  return corpus;
}

ImageDataset materialize(const DataSource& source, Split split, double val_fraction) {
  if (!source.synthetic) return load_dataset(source.path, split, val_fraction);
  const auto all = ImageDataset::from_tensor(materialize_corpus(source).images);
  if (split == Split::kAll) return all;
  std::vector<torch::Tensor> images;
  std::vector<std::string> names;
  for (size_t i = 0; i < all.size(); ++i) {
    const bool val = in_validation_split(all.name(i) + ".png", val_fraction);
    if (val == (split == Split::kVal)) {
      images.push_back(all.image(i));
      names.push_back(all.name(i));
    }
  }
  if (images.empty()) throw Error(ErrorKind::kDataset, "split of synthetic corpus is empty");
  return ImageDataset(std::move(images), std::move(names));
}

}  // namespace licbd::io
