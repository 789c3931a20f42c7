// Copyright 2026 The LDRF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ldrf {

enum class ErrorCode {
  kInvalidArgument,
  kFormatError,
  kDegenerateLayer,
  kUnsupportedStructure,
  kDivergence,
  kInvariantViolation,
  kIoError,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// command-line front end can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised while decoding model or dataset files. `offset` is the byte position
// at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& message);

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Raised by the layer optimizers when the loss blows up. Carries the layer name.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string layer, const std::string& message);

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

[[noreturn]] void throw_invalid(const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) throw_invalid(message);
}

}  // namespace ldrf
