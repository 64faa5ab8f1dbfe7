// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace graft {

enum class Errc {
  kMalformedHeader,
  kUnsupportedDtype,
  kIoFailure,
  kNotFound,
  kDuplicateName,
  kMissingTensor,
  kShapeMismatch,
  kUnclassifiableModule,
  kContextOverflow,
  kEmptyOverlap,
  kMissingModuleTrace,
  kPlanOutsideCompat,
  kShapeDrift,
  kDtypeMismatch,
  kLengthMismatch,
  kInvalidArgument,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMalformedHeader: return "MalformedHeader";
    case Errc::kUnsupportedDtype: return "UnsupportedDtype";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kNotFound: return "NotFound";
    case Errc::kDuplicateName: return "DuplicateName";
    case Errc::kMissingTensor: return "MissingTensor";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kUnclassifiableModule: return "UnclassifiableModule";
    case Errc::kContextOverflow: return "ContextOverflow";
    case Errc::kEmptyOverlap: return "EmptyOverlap";
    case Errc::kMissingModuleTrace: return "MissingModuleTrace";
    case Errc::kPlanOutsideCompat: return "PlanOutsideCompat";
    case Errc::kShapeDrift: return "ShapeDrift";
    case Errc::kDtypeMismatch: return "DtypeMismatch";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace graft
