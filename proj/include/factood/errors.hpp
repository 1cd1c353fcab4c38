// Copyright 2026 The Factood Authors
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

namespace factood {

// Bad input: malformed tags, inconsistent files, violated preconditions.
// The CLI maps this family to exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Something went wrong while running a well-formed request (I/O, a
// diverging optimizer). The CLI maps this family to exit status 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tag decoding failure. `position()` is the 1-based field index
// (1 = scene ... 5 = agent, 6 = trailing characters).
class DecodeError : public ValidationError {
 public:
  DecodeError(int position, const std::string& what)
      : ValidationError(what), position_(position) {}

  int position() const noexcept { return position_; }

 private:
  int position_;
};

}  // namespace factood
