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

#include "licbd/codec.hpp"

#include <sstream>

#include "licbd/errors.hpp"
#include "licbd/gdn.hpp"
#include "licbd/hashing.hpp"

namespace licbd {
namespace {

namespace nn = torch::nn;

nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding((kernel - 1) / 2));
}

// Exactly doubles the spatial size for any odd or even kernel.
nn::ConvTranspose2d deconv(int64_t in, int64_t out, int64_t kernel) {
  const int64_t pad = (kernel - 1) / 2;
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, kernel)
                                 .stride(2)
                                 .padding(pad)
                                 .output_padding(2 + 2 * pad - kernel));
}

void push_activation(nn::Sequential& seq, Activation act, int64_t channels, bool inverse) {
  switch (act) {
    case Activation::kGdn: seq->push_back(GDN(channels, inverse)); break;
    case Activation::kRelu: seq->push_back(nn::ReLU()); break;
    case Activation::kNone: break;
  }
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::kGdn: return "gdn";
    case Activation::kRelu: return "relu";
    case Activation::kNone: return "none";
  }
  return "?";
}

NamedTensors prefixed(const torch::nn::Module& module, const std::string& prefix) {
  NamedTensors out;
  for (const auto& item : module.named_parameters(true)) {
    out.emplace_back(prefix + "." + item.key(), item.value());
  }
  return out;
}

}  // namespace

double lambda_for_quality(int quality) {
  if (quality < 1 || quality > static_cast<int>(kQualityLambdas.size())) {
    throw_config("quality must be in [1, 8], got " + std::to_string(quality));
  }
  return kQualityLambdas[static_cast<size_t>(quality - 1)];
}

std::string CodecConfig::architecture_string() const {
  std::ostringstream os;
  os << "hyperprior/v1 hidden=" << hidden_channels << " cy=" << latent_channels
     << " cz=" << hyper_channels << " stages=" << stages << " kernel=" << kernel
     << " act=" << activation_name(activation);
  return os.str();
}

std::string CodecConfig::architecture_hash() const {
  return sha256_hex(architecture_string()).substr(0, 16);
}

torch::Tensor distortion(const torch::Tensor& x, const torch::Tensor& x_hat) {
  return 255.0 * 255.0 * torch::mse_loss(x_hat, x);
}

void validate_image_batch(const torch::Tensor& x, int64_t stride) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw_shape("expected an image batch of shape (B, 3, H, W), got " +
                std::to_string(x.dim()) + "-d tensor");
  }
  if (x.size(2) % stride != 0 || x.size(3) % stride != 0) {
    throw_shape("image size " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                " is not a multiple of the codec stride " + std::to_string(stride));
  }
}

HyperpriorCodecImpl::HyperpriorCodecImpl(CodecConfig config) : config_(config) {
  if (config_.stages < 1 || config_.kernel < 1 || config_.latent_channels < 1 ||
      config_.hyper_channels < 1 || config_.hidden_channels < 1) {
    throw_config("codec dimensions must be positive");
  }
  const auto n = config_.hidden_channels;
  const auto cy = config_.latent_channels;
  const auto cz = config_.hyper_channels;
  const auto k = config_.kernel;

  analysis_ = nn::Sequential();
  synthesis_ = nn::Sequential();
  for (int64_t s = 0; s < config_.stages; ++s) {
    const int64_t in = s == 0 ? 3 : n;
    const bool last = s + 1 == config_.stages;
    analysis_->push_back(conv(in, last ? cy : n, k, 2));
    if (!last) push_activation(analysis_, config_.activation, n, false);
  }
  for (int64_t s = 0; s < config_.stages; ++s) {
    const int64_t in = s == 0 ? cy : n;
    const bool last = s + 1 == config_.stages;
    synthesis_->push_back(deconv(in, last ? 3 : n, k));
    if (!last) push_activation(synthesis_, config_.activation, n, true);
  }

  const auto mid = cz * 3 / 2;
  hyper_analysis_ = nn::Sequential(conv(cy, cz, 3, 1), nn::LeakyReLU(), conv(cz, cz, 5, 2),
                                   nn::LeakyReLU(), conv(cz, cz, 5, 2));
  hyper_synthesis_ = nn::Sequential(deconv(cz, cz, 5), nn::LeakyReLU(), deconv(cz, mid, 5),
                                    nn::LeakyReLU(), conv(mid, 2 * cy, 3, 1));
  prior_ = FactorizedPrior(cz);

  register_module("analysis", analysis_);
  register_module("synthesis", synthesis_);
  register_module("hyper_analysis", hyper_analysis_);
  register_module("hyper_synthesis", hyper_synthesis_);
  register_module("prior", prior_);
}

torch::Tensor HyperpriorCodecImpl::encode(const torch::Tensor& x) {
  validate_image_batch(x, config_.stride());
  return analysis_->forward(x);
}

torch::Tensor HyperpriorCodecImpl::hyper_encode(const torch::Tensor& y) {
  return hyper_analysis_->forward(y);
}

torch::Tensor HyperpriorCodecImpl::decode(const torch::Tensor& y_hat) {
  if (y_hat.dim() != 4 || y_hat.size(1) != config_.latent_channels) {
    throw_shape("decode expects (B, " + std::to_string(config_.latent_channels) + ", h, w)");
  }
  return synthesis_->forward(y_hat);
}

std::pair<torch::Tensor, torch::Tensor> HyperpriorCodecImpl::hyper_decode(
    const torch::Tensor& z_hat, int64_t h, int64_t w) {
  auto params = hyper_synthesis_->forward(z_hat);
  if (params.size(2) < h || params.size(3) < w) {
    throw_shape("hyper-decoder output smaller than latent grid");
  }
  params = params.slice(2, 0, h).slice(3, 0, w);
  auto chunks = params.chunk(2, 1);
  return {chunks[0], torch::softplus(chunks[1])};
}

RateReport HyperpriorCodecImpl::rate_estimate(const torch::Tensor& y_hat,
                                              const torch::Tensor& z_hat,
                                              int64_t image_height, int64_t image_width) {
  const auto [means, scales] = hyper_decode(z_hat, y_hat.size(2), y_hat.size(3));
  RateReport r;
  r.bits_y = bits_from_likelihoods(gaussian_likelihood(y_hat, means, scales)).sum({1, 2, 3});
  r.bits_z = bits_from_likelihoods(prior_->likelihood(z_hat)).sum({1, 2, 3});
  r.height = image_height;
  r.width = image_width;
  return r;
}

ForwardResult HyperpriorCodecImpl::forward(const torch::Tensor& x, QuantMode mode,
                                           std::optional<torch::Generator> gen) {
  ForwardResult out;
  out.y = encode(x);
  out.z = hyper_encode(out.y);
  out.z_hat = quantize(out.z, mode, gen);
  out.y_hat = quantize(out.y, mode, gen);
  std::tie(out.means, out.scales) = hyper_decode(out.z_hat, out.y.size(2), out.y.size(3));
  out.rates.bits_y =
      bits_from_likelihoods(gaussian_likelihood(out.y_hat, out.means, out.scales)).sum({1, 2, 3});
  out.rates.bits_z = bits_from_likelihoods(prior_->likelihood(out.z_hat)).sum({1, 2, 3});
  out.rates.height = x.size(2);
  out.rates.width = x.size(3);
  out.x_hat = decode(out.y_hat);
  return out;
}

RDLoss HyperpriorCodecImpl::rd_loss_from(const torch::Tensor& x,
                                         const ForwardResult& result) const {
  RDLoss loss;
  loss.lambda = config_.lambda;
  loss.rate = result.rates.bpp();
  loss.distortion = distortion(x, result.x_hat);
  loss.total = loss.rate + config_.lambda * loss.distortion;
  return loss;
}

RDLoss HyperpriorCodecImpl::rd_loss(const torch::Tensor& x, std::optional<torch::Generator> gen) {
  return rd_loss_from(x, forward(x, QuantMode::kTrainNoise, gen));
}

NamedTensors HyperpriorCodecImpl::partition_parameters(Partition part) {
  NamedTensors out;
  auto append = [&out](NamedTensors more) {
    out.insert(out.end(), std::make_move_iterator(more.begin()),
               std::make_move_iterator(more.end()));
  };
  switch (part) {
    case Partition::kEncoder:
      append(prefixed(*analysis_, "analysis"));
      append(prefixed(*hyper_analysis_, "hyper_analysis"));
      break;
    case Partition::kDecoder:
      append(prefixed(*synthesis_, "synthesis"));
      break;
    case Partition::kEntropy:
      append(prefixed(*hyper_synthesis_, "hyper_synthesis"));
      append(prefixed(*prior_, "prior"));
      break;
  }
  return out;
}

std::vector<torch::Tensor> HyperpriorCodecImpl::partition_tensors(Partition part) {
  std::vector<torch::Tensor> out;
  for (auto& [name, t] : partition_parameters(part)) out.push_back(t);
  return out;
}

void HyperpriorCodecImpl::set_trainable(Partition part, bool trainable) {
  for (auto& t : partition_tensors(part)) t.requires_grad_(trainable);
}

std::map<std::string, torch::Tensor> snapshot_parameters(torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : module.named_parameters(true)) {
    out.emplace(item.key(), item.value().detach().clone());
  }
  return out;
}

void restore_parameters(torch::nn::Module& module,
                        const std::map<std::string, torch::Tensor>& snapshot) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters(true)) {
    const auto it = snapshot.find(item.key());
    if (it == snapshot.end()) {
      throw_config("snapshot is missing parameter '" + item.key() + "'");
    }
    item.value().copy_(it->second);
  }
}

}  // namespace licbd
