// Copyright 2026 The regsyn Authors
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

namespace regsyn {

/// Base of every error thrown by the library. `kind()` names the failure
/// class so callers (the CLI in particular) can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define REGSYN_DEFINE_ERROR(Name, tag)                                \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(tag, what) {}      \
  }

REGSYN_DEFINE_ERROR(FormatError, "format error");
REGSYN_DEFINE_ERROR(CorruptionError, "corruption error");
REGSYN_DEFINE_ERROR(ValidationError, "validation error");
REGSYN_DEFINE_ERROR(ParameterError, "parameter error");
REGSYN_DEFINE_ERROR(BoundsError, "bounds error");
REGSYN_DEFINE_ERROR(EmptyMaskError, "empty-mask error");
REGSYN_DEFINE_ERROR(DimensionError, "dimension error");
REGSYN_DEFINE_ERROR(IoError, "io error");
REGSYN_DEFINE_ERROR(ConfigError, "config error");
REGSYN_DEFINE_ERROR(ManifestError, "manifest error");
// Raised when training produces a NaN/Inf; carries a diagnostic dump.
REGSYN_DEFINE_ERROR(NonFiniteError, "non-finite error");

#undef REGSYN_DEFINE_ERROR

}  // namespace regsyn
