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

#include "licbd/io/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "licbd/errors.hpp"
#include "licbd/io/files.hpp"

namespace licbd::io {
namespace {

using nlohmann::json;

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default: throw_io(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw_io("checkpoint: unknown dtype code " + std::to_string(code));
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw_io("checkpoint truncated: " + path.string());
  return v;
}

std::string get_bytes(std::istream& in, uint64_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw_io("checkpoint truncated: " + path.string());
  return s;
}

std::vector<std::pair<std::string, torch::Tensor>> module_state(torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kGdn: return "gdn";
    case Activation::kRelu: return "relu";
    case Activation::kNone: return "none";
  }
  return "gdn";
}

Activation activation_from(const std::string& s) {
  if (s == "gdn") return Activation::kGdn;
  if (s == "relu") return Activation::kRelu;
  if (s == "none") return Activation::kNone;
  throw_io("checkpoint: unknown activation '" + s + "'");
}

void expect_kind(const Checkpoint& ck, const std::string& kind, const std::filesystem::path& path) {
  if (ck.metadata.value("kind", "") != kind) {
    throw_io("checkpoint " + path.string() + " holds '" + ck.metadata.value("kind", "") +
             "', expected '" + kind + "'");
  }
}

}  // namespace

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return t;
  }
  throw_io("checkpoint has no array '" + name + "'");
}

std::vector<uint8_t> tensor_bytes(const torch::Tensor& t) {
  const auto c = t.detach().cpu().contiguous();
  const auto n = static_cast<size_t>(c.numel() * c.element_size());
  std::vector<uint8_t> out(n);
  if (n) std::memcpy(out.data(), c.data_ptr(), n);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::set<std::string> seen;
  for (const auto& [name, t] : checkpoint.arrays) {
    if (!seen.insert(name).second) throw_io("checkpoint: duplicate array name '" + name + "'");
    dtype_code(t.scalar_type());
    if (t.dim() > 255) throw_io("checkpoint: too many dimensions in '" + name + "'");
  }
  const std::string meta = checkpoint.metadata.dump();
  atomic_write(path, [&](const std::filesystem::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw_io("cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<uint32_t>(out, kCheckpointVersion);
    put<uint32_t>(out, static_cast<uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<uint32_t>(out, static_cast<uint32_t>(checkpoint.arrays.size()));
    for (const auto& [name, t] : checkpoint.arrays) {
      put<uint32_t>(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<uint8_t>(out, dtype_code(t.scalar_type()));
      put<uint8_t>(out, static_cast<uint8_t>(t.dim()));
      for (const auto d : t.sizes()) put<int64_t>(out, d);
      const auto bytes = tensor_bytes(t);
      put<uint64_t>(out, bytes.size());
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
    out.flush();
    if (!out) throw_io("write failed: " + tmp.string());
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw_io("not a licbd checkpoint: " + path.string());
  }
  const auto version = get<uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw_io("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto meta_len = get<uint32_t>(in, path);
  try {
    ck.metadata = json::parse(get_bytes(in, meta_len, path));
  } catch (const json::parse_error& e) {
    throw_io("checkpoint metadata is not valid JSON: " + std::string(e.what()));
  }
  const auto count = get<uint32_t>(in, path);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<uint32_t>(in, path);
    auto name = get_bytes(in, name_len, path);
    const auto dtype = dtype_from(get<uint8_t>(in, path));
    const auto ndim = get<uint8_t>(in, path);
    std::vector<int64_t> dims(ndim);
    int64_t numel = 1;
    for (auto& d : dims) {
      d = get<int64_t>(in, path);
      if (d < 0) throw_io("checkpoint: negative dimension in '" + name + "'");
      numel *= d;
    }
    const auto nbytes = get<uint64_t>(in, path);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (nbytes != static_cast<uint64_t>(numel * t.element_size())) {
      throw_io("checkpoint: size mismatch for '" + name + "'");
    }
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw_io("checkpoint truncated: " + path.string());
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

Checkpoint module_checkpoint(torch::nn::Module& module, json metadata) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto& [name, t] : module_state(module)) ck.arrays.emplace_back(name, t.detach().clone());
  return ck;
}

void load_module_parameters(torch::nn::Module& module, const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  const auto state = module_state(module);
  if (state.size() != checkpoint.arrays.size()) {
    throw_io("checkpoint has " + std::to_string(checkpoint.arrays.size()) + " arrays, module has " +
             std::to_string(state.size()));
  }
  for (const auto& [name, dst] : state) {
    const auto& src = checkpoint.at(name);
    if (src.sizes() != dst.sizes()) throw_io("checkpoint: shape mismatch for '" + name + "'");
    dst.copy_(src);
  }
}

void save_codec(const std::filesystem::path& path, HyperpriorCodec& codec, uint64_t seed) {
  const auto& c = codec->config();
  json meta = {{"kind", "codec"},
               {"architecture", c.architecture_string()},
               {"architecture_hash", c.architecture_hash()},
               {"hidden_channels", c.hidden_channels},
               {"latent_channels", c.latent_channels},
               {"hyper_channels", c.hyper_channels},
               {"stages", c.stages},
               {"kernel", c.kernel},
               {"activation", activation_name(c.activation)},
               {"quality", c.quality},
               {"lambda", c.lambda},
               {"seed", seed}};
  save_checkpoint(path, module_checkpoint(*codec, std::move(meta)));
}

HyperpriorCodec load_codec(const std::filesystem::path& path) {
  const auto ck = load_checkpoint(path);
  expect_kind(ck, "codec", path);
  const auto& m = ck.metadata;
  CodecConfig c;
  c.hidden_channels = m.at("hidden_channels").get<int64_t>();
  c.latent_channels = m.at("latent_channels").get<int64_t>();
  c.hyper_channels = m.at("hyper_channels").get<int64_t>();
  c.stages = m.at("stages").get<int64_t>();
  c.kernel = m.at("kernel").get<int64_t>();
  c.activation = activation_from(m.at("activation").get<std::string>());
  c.quality = m.at("quality").get<int>();
  c.lambda = m.at("lambda").get<double>();
  if (c.architecture_hash() != m.at("architecture_hash").get<std::string>()) {
    throw_io("checkpoint architecture hash mismatch: " + path.string());
  }
  HyperpriorCodec codec(c);
  load_module_parameters(*codec, ck);
  return codec;
}

void save_trigger(const std::filesystem::path& path, TriggerGenerator& trigger,
                  const std::string& objective) {
  const auto& c = trigger->config();
  json meta = {{"kind", "trigger"},
               {"objective", objective},
               {"block", c.block},
               {"top_k", c.top_k},
               {"band", c.band},
               {"epsilon", c.epsilon},
               {"use_topk", c.use_topk},
               {"use_patch_weights", c.use_patch_weights},
               {"weight_net_channels", c.weight_net_channels}};
  save_checkpoint(path, module_checkpoint(*trigger, std::move(meta)));
}

TriggerGenerator load_trigger(const std::filesystem::path& path, std::string* objective) {
  const auto ck = load_checkpoint(path);
  expect_kind(ck, "trigger", path);
  const auto& m = ck.metadata;
  TriggerConfig c;
  c.block = m.at("block").get<int64_t>();
  c.top_k = m.at("top_k").get<int64_t>();
  c.band = m.at("band").get<int64_t>();
  c.epsilon = m.at("epsilon").get<double>();
  c.use_topk = m.at("use_topk").get<bool>();
  c.use_patch_weights = m.at("use_patch_weights").get<bool>();
  c.weight_net_channels = m.at("weight_net_channels").get<int64_t>();
  if (objective) *objective = m.value("objective", "");
  TriggerGenerator trigger(c);
  load_module_parameters(*trigger, ck);
  return trigger;
}

void save_segmenter(const std::filesystem::path& path, Segmenter& model) {
  json meta = {{"kind", "segmenter"},
               {"classes", model->config().classes},
               {"width", model->config().width}};
  save_checkpoint(path, module_checkpoint(*model, std::move(meta)));
}

Segmenter load_segmenter(const std::filesystem::path& path) {
  const auto ck = load_checkpoint(path);
  expect_kind(ck, "segmenter", path);
  SegmenterConfig c;
  c.classes = ck.metadata.at("classes").get<int64_t>();
  c.width = ck.metadata.at("width").get<int64_t>();
  Segmenter model(c);
  load_module_parameters(*model, ck);
  return model;
}

void save_embedder(const std::filesystem::path& path, Embedder& model, double threshold) {
  json meta = {{"kind", "embedder"},
               {"dim", model->config().dim},
               {"width", model->config().width},
               {"threshold", threshold}};
  save_checkpoint(path, module_checkpoint(*model, std::move(meta)));
}

Embedder load_embedder(const std::filesystem::path& path, double* threshold) {
  const auto ck = load_checkpoint(path);
  expect_kind(ck, "embedder", path);
  EmbedderConfig c;
  c.dim = ck.metadata.at("dim").get<int64_t>();
  c.width = ck.metadata.at("width").get<int64_t>();
  if (threshold) *threshold = ck.metadata.at("threshold").get<double>();
  Embedder model(c);
  load_module_parameters(*model, ck);
  return model;
}

}  // namespace licbd::io
