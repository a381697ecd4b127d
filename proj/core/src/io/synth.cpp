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

#include "licbd/io/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "licbd/downstream.hpp"
#include "licbd/errors.hpp"

namespace licbd::io {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {
  return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

torch::Tensor to_8bit_grid(const torch::Tensor& x) {
  return torch::round(x.clamp(0.0, 1.0) * 255.0) / 255.0;
}

double smoothstep(double edge0, double edge1, double v) {
  const double t = std::clamp((v - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  // splitmix64 step so neighbouring indices give unrelated streams
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

bool in_ellipse(double px, double py, double cx, double cy, double rx, double ry) {
  const double dx = (px - cx) / rx;
  const double dy = (py - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace

CorpusKind parse_corpus_kind(const std::string& name) {
  if (name == "natural-noise") return CorpusKind::kNaturalNoise;
  if (name == "shapes") return CorpusKind::kShapes;
  if (name == "faces-toy") return CorpusKind::kFacesToy;
  throw_config("unknown corpus kind '" + name + "' (expected natural-noise|shapes|faces-toy)");
}

std::string to_string(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::kNaturalNoise: return "natural-noise";
    case CorpusKind::kShapes: return "shapes";
    case CorpusKind::kFacesToy: return "faces-toy";
  }
  return "?";
}

torch::Tensor natural_noise_image(int64_t size, uint64_t seed) {
  Rng rng(seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const double exponent = uniform(rng, 2.6, 3.4);

  const auto noise = torch::randn({3, size, size}, gen, torch::kFloat64);
  const auto freq = torch::fft::fftfreq(size, torch::TensorOptions(torch::kFloat64));
  const auto radius =
      torch::sqrt(freq.view({-1, 1}).square() + freq.view({1, -1}).square())
          .clamp_min(1.0 / static_cast<double>(size));
  const auto filter = torch::pow(radius, -exponent / 2.0);
  auto field = torch::real(torch::fft::ifft2(torch::fft::fft2(noise) * filter));
  field = (field - field.mean({1, 2}, true)) / field.std({1, 2}, true, true).clamp_min(1e-12);

  // Luma-dominated color mixing.
  const auto mix = torch::tensor({{1.0, 0.35, 0.15}, {1.0, -0.2, 0.1}, {1.0, 0.1, -0.35}},
                                 torch::kFloat64);
  auto img = torch::matmul(mix, field.view({3, -1})).view({3, size, size});
  img = img * uniform(rng, 0.08, 0.16) + uniform(rng, 0.35, 0.65);

  auto acc = img.accessor<double, 3>();
  const int64_t regions = uniform_int(rng, 1, 4);
  for (int64_t r = 0; r < regions; ++r) {
    const double cx = uniform(rng, 0, static_cast<double>(size));
    const double cy = uniform(rng, 0, static_cast<double>(size));
    const double rad = uniform(rng, 0.1, 0.35) * static_cast<double>(size);
    const double soft = uniform(rng, 0.5, 3.0);
    const double dc[3] = {uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3)};
    const bool disc = uniform(rng, 0, 1) < 0.5;
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5 - cx;
        const double py = static_cast<double>(y) + 0.5 - cy;
        const double d = disc ? std::sqrt(px * px + py * py) : std::max(std::abs(px), std::abs(py));
        const double w = 1.0 - smoothstep(rad - soft, rad + soft, d);
        if (w <= 0.0) continue;
        for (int c = 0; c < 3; ++c) acc[c][y][x] += w * dc[c];
      }
    }
  }
  return to_8bit_grid(img.to(torch::kFloat32));
}

bool shape_covers(const SceneShape& shape, double px, double py) {
  if (shape.form == SceneShape::Form::kRect) {
    return px >= shape.x0 && px < shape.x1 && py >= shape.y0 && py < shape.y1;
  }
  const double dx = px - shape.x0;
  const double dy = py - shape.y0;
  return dx * dx + dy * dy <= shape.x1 * shape.x1;
}

SceneDescription generate_scene(int64_t size, uint64_t seed) {
  Rng rng(seed);
  const double s = static_cast<double>(size);
  SceneDescription scene;
  scene.size = size;
  scene.texture_seed = mix_seed(seed, 7);

  const float road = static_cast<float>(uniform(rng, 0.35, 0.5));
  scene.shapes.push_back({SceneShape::Form::kRect, kRoad, 0, 0, s, s, road, road,
                          road + 0.03f});

  const int64_t buildings = uniform_int(rng, 1, 3);
  for (int64_t i = 0; i < buildings; ++i) {
    const double x0 = uniform(rng, -0.1, 0.8) * s;
    const double w = uniform(rng, 0.2, 0.5) * s;
    const double h = uniform(rng, 0.3, 0.55) * s;
    scene.shapes.push_back({SceneShape::Form::kRect, kBuilding, x0, 0, x0 + w, h,
                            static_cast<float>(uniform(rng, 0.55, 0.8)),
                            static_cast<float>(uniform(rng, 0.3, 0.45)),
                            static_cast<float>(uniform(rng, 0.2, 0.3))});
  }
  const int64_t trees = uniform_int(rng, 1, 3);
  for (int64_t i = 0; i < trees; ++i) {
    scene.shapes.push_back({SceneShape::Form::kDisc, kVegetation, uniform(rng, 0, 1) * s,
                            uniform(rng, 0.1, 0.6) * s, uniform(rng, 0.08, 0.16) * s, 0,
                            static_cast<float>(uniform(rng, 0.1, 0.25)),
                            static_cast<float>(uniform(rng, 0.5, 0.7)),
                            static_cast<float>(uniform(rng, 0.1, 0.25))});
  }
  const int64_t cars = uniform_int(rng, 1, 3);
  for (int64_t i = 0; i < cars; ++i) {
    const double w = uniform(rng, 0.18, 0.32) * s;
    const double h = uniform(rng, 0.1, 0.16) * s;
    const double x0 = uniform(rng, 0, 1) * (s - w);
    const double y0 = uniform(rng, 0.6, 0.95) * s - h;
    const int palette = static_cast<int>(uniform_int(rng, 0, 2));
    const float rgb[3][3] = {{0.8f, 0.12f, 0.1f}, {0.1f, 0.2f, 0.8f}, {0.85f, 0.8f, 0.1f}};
    scene.shapes.push_back({SceneShape::Form::kRect, kCar, x0, y0, x0 + w, y0 + h,
                            rgb[palette][0], rgb[palette][1], rgb[palette][2]});
  }
  return scene;
}

std::pair<torch::Tensor, torch::Tensor> render_scene(const SceneDescription& scene) {
  const int64_t n = scene.size;
  auto image = torch::zeros({3, n, n}, torch::kFloat32);
  auto labels = torch::zeros({n, n}, torch::kLong);
  auto img = image.accessor<float, 3>();
  auto lab = labels.accessor<int64_t, 2>();
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      for (const auto& shape : scene.shapes) {
        if (!shape_covers(shape, px, py)) continue;
        lab[y][x] = shape.cls;
        img[0][y][x] = shape.r;
        img[1][y][x] = shape.g;
        img[2][y][x] = shape.b;
      }
    }
  }
  auto gen = at::make_generator<at::CPUGeneratorImpl>(scene.texture_seed);
  const auto texture = 0.04f * torch::randn({1, n, n}, gen) + 0.02f * torch::randn({3, n, n}, gen);
  return {to_8bit_grid(image + texture), labels};
}

FaceIdentity generate_identity(uint64_t seed) {
  Rng rng(seed);
  FaceIdentity id{};
  const double tone = uniform(rng, 0.35, 0.9);
  id.skin[0] = static_cast<float>(tone);
  id.skin[1] = static_cast<float>(tone * uniform(rng, 0.7, 0.85));
  id.skin[2] = static_cast<float>(tone * uniform(rng, 0.55, 0.75));
  for (auto& c : id.hair) c = static_cast<float>(uniform(rng, 0.0, 0.6));
  for (auto& c : id.eyes) c = static_cast<float>(uniform(rng, 0.0, 0.7));
  id.face_rx = uniform(rng, 0.24, 0.34);
  id.face_ry = uniform(rng, 0.3, 0.4);
  id.eye_dx = uniform(rng, 0.08, 0.15);
  id.eye_y = uniform(rng, 0.03, 0.12);
  id.eye_r = uniform(rng, 0.03, 0.06);
  id.mouth_w = uniform(rng, 0.08, 0.18);
  id.mouth_y = uniform(rng, 0.12, 0.22);
  id.hair_h = uniform(rng, 0.05, 0.2);
  id.nose_len = uniform(rng, 0.04, 0.1);
  return id;
}

torch::Tensor render_face(const FaceIdentity& id, int64_t size, uint64_t variation_seed) {
  Rng rng(variation_seed);
  const double s = static_cast<double>(size);
  const double cx = s / 2 + uniform(rng, -2.0, 2.0);
  const double cy = s / 2 + 2 + uniform(rng, -2.0, 2.0);
  const double light = uniform(rng, 0.9, 1.1);
  const float bg[3] = {static_cast<float>(uniform(rng, 0.2, 0.9)),
                       static_cast<float>(uniform(rng, 0.2, 0.9)),
                       static_cast<float>(uniform(rng, 0.2, 0.9))};
  const double rx = id.face_rx * s;
  const double ry = id.face_ry * s;
  auto image = torch::zeros({3, size, size}, torch::kFloat32);
  auto img = image.accessor<float, 3>();
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const float* color = bg;
      if (in_ellipse(px, py, cx, cy - ry * 0.35, rx * 1.08, ry * 0.75) &&
          py < cy - ry + id.hair_h * s + ry * 0.2) {
        color = id.hair;
      }
      if (in_ellipse(px, py, cx, cy, rx, ry) && py >= cy - ry + id.hair_h * s) color = id.skin;
      const double ey = cy - id.eye_y * s;
      const double er = id.eye_r * s;
      if (in_ellipse(px, py, cx - id.eye_dx * s, ey, er, er) ||
          in_ellipse(px, py, cx + id.eye_dx * s, ey, er, er)) {
        color = id.eyes;
      }
      static const float kMouth[3] = {0.45f, 0.1f, 0.12f};
      if (std::abs(px - cx) < id.mouth_w * s / 2 && std::abs(py - (cy + id.mouth_y * s)) < 1.2) {
        color = kMouth;
      }
      static const float kNose[3] = {0.3f, 0.2f, 0.15f};
      if (std::abs(px - cx) < 0.8 && py > ey && py < ey + id.nose_len * s + 2) color = kNose;
      for (int c = 0; c < 3; ++c) img[c][y][x] = static_cast<float>(color[c] * light);
    }
  }
  auto gen = at::make_generator<at::CPUGeneratorImpl>(mix_seed(variation_seed, 3));
  return to_8bit_grid(image + 0.02f * torch::randn({3, size, size}, gen));
}

SyntheticCorpus synth_corpus(CorpusKind kind, int64_t n, int64_t size, uint64_t seed,
                             FaceCorpusOptions faces) {
  if (n <= 0 || size <= 0) throw_config("corpus size and count must be positive");
  SyntheticCorpus corpus;
  corpus.kind = kind;
  corpus.images = torch::empty({n, 3, size, size}, torch::kFloat32);
  switch (kind) {
    case CorpusKind::kNaturalNoise:
      for (int64_t i = 0; i < n; ++i) corpus.images[i] = natural_noise_image(size, mix_seed(seed, i));
      break;
    case CorpusKind::kShapes:
      corpus.labels = torch::empty({n, size, size}, torch::kLong);
      for (int64_t i = 0; i < n; ++i) {
        auto [img, lab] = render_scene(generate_scene(size, mix_seed(seed, i)));
        corpus.images[i] = img;
        corpus.labels[i] = lab;
      }
      break;
    case CorpusKind::kFacesToy: {
      if (faces.identities <= 0) throw_config("face corpus needs at least one identity");
      std::vector<FaceIdentity> ids;
      for (int64_t k = 0; k < faces.identities; ++k) {
        ids.push_back(generate_identity(mix_seed(seed ^ 0xfaceull, static_cast<uint64_t>(k))));
      }
      corpus.labels = torch::empty({n}, torch::kLong);
      for (int64_t i = 0; i < n; ++i) {
        const int64_t identity = i % faces.identities;
        corpus.images[i] = render_face(ids[static_cast<size_t>(identity)], size, mix_seed(seed, i));
        corpus.labels[i] = identity;
      }
      break;
    }
  }
  return corpus;
}

}  // namespace licbd::io
