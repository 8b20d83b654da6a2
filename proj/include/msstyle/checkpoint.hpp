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

// Single-file container of named records. Layout (little endian):
//   "MSSTCKPT" | u8 version | u32 record count
//   per record: u8 type | u32 name length | name | u64 payload length | payload
// Types: 1 = f64 tensor (u32 rows, u32 cols, row-major f64),
//        2 = i64 integer, 3 = UTF-8 text.
// Readers skip record types they do not know.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "msstyle/autodiff.hpp"

namespace msstyle {

class ParamStore;

struct Checkpoint {
  static constexpr std::uint8_t kVersion = 1;

  std::map<std::string, Matrix> tensors;
  std::map<std::string, std::int64_t> integers;
  std::map<std::string, std::string> texts;

  std::string encode() const;
  static Checkpoint decode(const std::string& bytes);
  // Writes to a sibling temp file and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const Matrix& tensor(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  const std::string& text(const std::string& name) const;
};

// Parameters are stored as "param/<name>".
void store_parameters(const ParamStore& store, Checkpoint& ckpt);
// Every parameter in `store` must be present with a matching shape.
void restore_parameters(ParamStore& store, const Checkpoint& ckpt);

}  // namespace msstyle
