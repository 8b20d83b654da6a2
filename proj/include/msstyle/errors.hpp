// Copyright 2026 The msstyle Authors
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

namespace msstyle {

// Violated precondition of an operation (bad arity, out-of-range index, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed data coming from outside the program (audio, files, configs).
class InvalidInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required file or record is absent. The message names the path.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure reported by an external plug-in (e.g. a semantic embedder server).
class ExternalDependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  std::string diagnostics_;
};

#define MSSTYLE_REQUIRE(cond, msg)                                   \
  do {                                                               \
    if (!(cond)) throw ::msstyle::ContractError(std::string(msg));   \
  } while (0)

}  // namespace msstyle
