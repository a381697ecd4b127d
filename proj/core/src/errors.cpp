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

#include "licbd/errors.hpp"

namespace licbd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFrozenDrift: return "frozen-drift";
    case ErrorKind::kDataset: return "dataset";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

void throw_shape(const std::string& message) { throw Error(ErrorKind::kShape, message); }
void throw_numeric(const std::string& message) { throw Error(ErrorKind::kNumeric, message); }
void throw_config(const std::string& message) { throw Error(ErrorKind::kConfig, message); }
void throw_io(const std::string& message) { throw Error(ErrorKind::kIo, message); }

}  // namespace licbd
