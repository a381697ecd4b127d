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
#include <string>
#include <vector>

namespace licbd::io {

enum class CorpusKind { kNaturalNoise, kShapes, kFacesToy };

CorpusKind parse_corpus_kind(const std::string& name);
std::string to_string(CorpusKind kind);

// Images are (N, 3, size, size) on the 8-bit grid (k / 255). `labels` holds
// (N, size, size) int64 class maps for shapes, (N,) identity ids for faces,
// and is undefined for natural-noise corpora.
struct SyntheticCorpus {
  CorpusKind kind = CorpusKind::kNaturalNoise;
  torch::Tensor images;
  torch::Tensor labels;
};

struct FaceCorpusOptions {
  int64_t identities = 20;
};

SyntheticCorpus synth_corpus(CorpusKind kind, int64_t n, int64_t size, uint64_t seed,
                             FaceCorpusOptions faces = {});

// 1/f^a filtered noise textures with a few soft-edged color regions.
torch::Tensor natural_noise_image(int64_t size, uint64_t seed);

// Street-like scene: road, buildings, vegetation and cars, drawn back to
// front. The description is public so tests can rasterize it independently.
struct SceneShape {
  enum class Form { kRect, kDisc } form = Form::kRect;
  int64_t cls = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rect corners, or disc center (x0, y0) and radius x1
  float r = 0, g = 0, b = 0;
};
struct SceneDescription {
  int64_t size = 0;
  uint64_t texture_seed = 0;
  std::vector<SceneShape> shapes;  // painter's order; first shape is the road background
};

SceneDescription generate_scene(int64_t size, uint64_t seed);
// Returns {image (3, H, W), labels (H, W)}.
std::pair<torch::Tensor, torch::Tensor> render_scene(const SceneDescription& scene);
bool shape_covers(const SceneShape& shape, double px, double py);

struct FaceIdentity {
  float skin[3];
  float hair[3];
  float eyes[3];
  double face_rx, face_ry, eye_dx, eye_y, eye_r, mouth_w, mouth_y, hair_h, nose_len;
};
FaceIdentity generate_identity(uint64_t seed);
torch::Tensor render_face(const FaceIdentity& id, int64_t size, uint64_t variation_seed);

}  // namespace licbd::io
