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

#include "ldrf/error.hpp"

#include <utility>

namespace ldrf {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kFormatError: return "format-error";
    case ErrorCode::kDegenerateLayer: return "degenerate-layer";
    case ErrorCode::kUnsupportedStructure: return "unsupported-structure";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

FormatError::FormatError(std::uint64_t offset, const std::string& message)
    : Error(ErrorCode::kFormatError, message + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

DivergenceError::DivergenceError(std::string layer, const std::string& message)
    : Error(ErrorCode::kDivergence, "layer " + layer + ": " + message), layer_(std::move(layer)) {}

void throw_invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

}  // namespace ldrf
