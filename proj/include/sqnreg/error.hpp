/*
 * Copyright 2026 The sqnreg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SQNREG_ERROR_HPP_
#define SQNREG_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace sqnreg {

/// Machine-readable error categories. The CLI maps each one to its own exit code.
enum class ErrorCategory {
  InvalidArgument = 2,
  Parse = 3,
  Io = 4,
  Numerical = 5,
  Degenerate = 6,
};

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "invalid_argument";
    case ErrorCategory::Parse: return "parse";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Numerical: return "numerical";
    case ErrorCategory::Degenerate: return "degenerate";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

  /// Same category, message prefixed with context (e.g. "image 3: ").
  Error annotated(std::string_view prefix) const {
    return Error(category_, std::string(prefix) + what());
  }

 private:
  ErrorCategory category_;
};

namespace detail {
inline void require(bool ok, ErrorCategory c, const std::string& msg) {
  if (!ok) throw Error(c, msg);
}
}  // namespace detail

}  // namespace sqnreg

#endif  // SQNREG_ERROR_HPP_
