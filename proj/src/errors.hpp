// Copyright 2026 The morphprobe Authors
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

#include <stdexcept>
#include <string>

namespace morphprobe {

// Every failure the core raises carries one of these codes. The C API maps
// them 1:1 onto mp_status values, so the numbering is part of the ABI.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kInventory = 2,
  kConfiguration = 3,
  kExhausted = 4,
  kTemplate = 5,
  kRange = 6,
  kDomain = 7,
  kDegenerateVariance = 8,
  kIo = 9,
  kIntegrity = 10,
  kCorruption = 11,
  kPlanMismatch = 12,
  kMissingArtifact = 13,
  kBackend = 14,
  kProtocol = 15,
  kInvariant = 16,
  kCancelled = 17,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInventory: return "inventory";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kExhausted: return "exhausted";
    case ErrorCode::kTemplate: return "template";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerateVariance: return "degenerate_variance";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kIntegrity: return "integrity";
    case ErrorCode::kCorruption: return "corruption";
    case ErrorCode::kPlanMismatch: return "plan_mismatch";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kBackend: return "backend";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kInvariant: return "invariant";
    case ErrorCode::kCancelled: return "cancelled";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace morphprobe
