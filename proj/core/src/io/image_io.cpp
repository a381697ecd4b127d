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

#include "licbd/io/image_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

#include "licbd/errors.hpp"
#include "licbd/io/files.hpp"

namespace licbd::io {
namespace {

std::vector<uint8_t> read_raw(const std::filesystem::path& path, uint32_t format, int64_t& h,
                              int64_t& w) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw_io("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw_io("cannot decode PNG " + path.string() + ": " + image.message);
  }
  h = image.height;
  w = image.width;
  return buffer;
}

void write_raw(const std::filesystem::path& path, const uint8_t* data, int64_t h, int64_t w,
               uint32_t format) {
  atomic_write(path, [&](const std::filesystem::path& tmp) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    if (!png_image_write_to_file(&image, tmp.c_str(), 0, data, 0, nullptr)) {
      throw_io("cannot write PNG " + tmp.string() + ": " + image.message);
    }
  });
}

}  // namespace

torch::Tensor quantize_8bit(const torch::Tensor& image) {
  return torch::round(image.clamp(0.0, 1.0) * 255.0) / 255.0;
}

torch::Tensor read_png(const std::filesystem::path& path) {
  int64_t h = 0;
  int64_t w = 0;
  auto buffer = read_raw(path, PNG_FORMAT_RGB, h, w);
  auto t = torch::from_blob(buffer.data(), {h, w, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw_shape("write_png expects (3, H, W)");
  const auto bytes = torch::round(image.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                         .to(torch::kUInt8)
                         .permute({1, 2, 0})
                         .contiguous();
  write_raw(path, bytes.data_ptr<uint8_t>(), image.size(1), image.size(2), PNG_FORMAT_RGB);
}

torch::Tensor read_label_png(const std::filesystem::path& path) {
  int64_t h = 0;
  int64_t w = 0;
  auto buffer = read_raw(path, PNG_FORMAT_GRAY, h, w);
  return torch::from_blob(buffer.data(), {h, w}, torch::kUInt8).to(torch::kLong);
}

void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels) {
  if (labels.dim() != 2) throw_shape("label map must be (H, W)");
  if (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() > 255) {
    throw_shape("label values must fit in 8 bits");
  }
  const auto bytes = labels.to(torch::kUInt8).contiguous();
  write_raw(path, bytes.data_ptr<uint8_t>(), labels.size(0), labels.size(1), PNG_FORMAT_GRAY);
}

}  // namespace licbd::io
