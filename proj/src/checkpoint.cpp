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

#include "msstyle/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "msstyle/errors.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {
namespace {

constexpr char kMagic[8] = {'M', 'S', 'S', 'T', 'C', 'K', 'P', 'T'};
enum RecordType : std::uint8_t { kTensor = 1, kInteger = 2, kText = 3 };

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InvalidInputError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_record(std::string& out, RecordType type, const std::string& name, const std::string& payload) {
  put<std::uint8_t>(out, type);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint64_t>(out, payload.size());
  out += payload;
}

}  // namespace

std::string Checkpoint::encode() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size() + integers.size() + texts.size()));
  for (const auto& [name, m] : tensors) {
    std::string payload;
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(payload, m(r, c));
    put_record(out, kTensor, name, payload);
  }
  for (const auto& [name, v] : integers) {
    std::string payload;
    put<std::int64_t>(payload, v);
    put_record(out, kInteger, name, payload);
  }
  for (const auto& [name, t] : texts) put_record(out, kText, name, t);
  return out;
}

Checkpoint Checkpoint::decode(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw InvalidInputError("not a checkpoint file (bad magic)");
  const auto version = in.get<std::uint8_t>();
  if (version != kVersion)
    throw InvalidInputError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto type = in.get<std::uint8_t>();
    const std::string name = in.take(in.get<std::uint32_t>());
    const std::string payload = in.take(in.get<std::uint64_t>());
    Reader body(payload);
    switch (type) {
      case kTensor: {
        const auto rows = body.get<std::uint32_t>();
        const auto cols = body.get<std::uint32_t>();
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = body.get<double>();
        if (!body.done()) throw InvalidInputError("checkpoint tensor '" + name + "' has trailing bytes");
        ckpt.tensors[name] = std::move(m);
        break;
      }
      case kInteger:
        ckpt.integers[name] = body.get<std::int64_t>();
        break;
      case kText:
        ckpt.texts[name] = payload;
        break;
      default:
        break;  // newer record type: skip
    }
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    const std::string bytes = encode();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInputError("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("checkpoint not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return decode(buf.str());
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw InvalidInputError("checkpoint lacks tensor '" + name + "'");
  return it->second;
}

std::int64_t Checkpoint::integer(const std::string& name) const {
  auto it = integers.find(name);
  if (it == integers.end()) throw InvalidInputError("checkpoint lacks integer '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts.find(name);
  if (it == texts.end()) throw InvalidInputError("checkpoint lacks record '" + name + "'");
  return it->second;
}

void store_parameters(const ParamStore& store, Checkpoint& ckpt) {
  for (const auto& [name, p] : store.items()) ckpt.tensors["param/" + name] = p.value;
}

void restore_parameters(ParamStore& store, const Checkpoint& ckpt) {
  for (auto& [name, p] : store.items()) {
    const Matrix& m = ckpt.tensor("param/" + name);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw InvalidInputError("checkpoint parameter '" + name + "' has the wrong shape");
    p.value = m;
  }
}

}  // namespace msstyle
