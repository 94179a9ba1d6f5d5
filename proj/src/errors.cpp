// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/errors.hpp"

namespace darter {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidBox:
      return "invalid_box";
    case ErrorKind::kShape:
      return "shape";
    case ErrorKind::kIndex:
      return "index";
    case ErrorKind::kParse:
      return "parse";
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kState:
      return "state";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kCheckpoint:
      return "checkpoint";
    case ErrorKind::kInput:
      return "input";
    case ErrorKind::kSampleRejected:
      return "sample_rejected";
    case ErrorKind::kNonFiniteLoss:
      return "non_finite_loss";
  }
  return "unknown";
}

}  // namespace darter
