// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace averify {

/// Bad user input: malformed files, impossible flag combinations, violated
/// preconditions. The CLI maps this to exit code 1; everything else that
/// escapes is an internal error and exits 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace averify
