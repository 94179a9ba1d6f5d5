// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace darter {

// Every failure the library reports is a darter::Error tagged with a kind.
// The CLI maps kinds to exit codes, so keep the enumerators stable.
enum class ErrorKind {
  kInvalidBox,
  kShape,
  kIndex,
  kParse,
  kConfig,
  kState,
  kIo,
  kCheckpoint,
  kInput,
  kSampleRejected,
  kNonFiniteLoss,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace darter
