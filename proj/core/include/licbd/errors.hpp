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

#include <stdexcept>
#include <string>
#include <string_view>

namespace licbd {

enum class ErrorKind {
  kShape,
  kNumeric,
  kConfig,
  kIo,
  kFrozenDrift,
  kDataset,
};

std::string_view to_string(ErrorKind kind);

// Single exception type; the kind drives CLI exit-code categories.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_shape(const std::string& message);
[[noreturn]] void throw_numeric(const std::string& message);
[[noreturn]] void throw_config(const std::string& message);
[[noreturn]] void throw_io(const std::string& message);

}  // namespace licbd
