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

#include "msstyle/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "msstyle/config.hpp"
#include "msstyle/errors.hpp"

namespace msstyle::io {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "blob and WAV codecs assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + at, 4);
  return v;
}

std::uint16_t get_u16(const std::string& in, std::size_t at) {
  std::uint16_t v;
  std::memcpy(&v, in.data() + at, 2);
  return v;
}

json spans_json(const AlignmentMap& a) {
  json spans = json::array();
  for (const PhonemeSpan& s : a.subword_to_phoneme) spans.push_back({s.first, s.last});
  return spans;
}

std::vector<PhonemeSpan> spans_from_json(const json& j) {
  std::vector<PhonemeSpan> spans;
  for (const json& s : j) {
    if (!s.is_array() || s.size() != 2) throw InvalidInputError("subword span must be [first, last]");
    spans.push_back({s[0].get<int>(), s[1].get<int>()});
  }
  return spans;
}

}  // namespace

std::string encode_blob(const Matrix& m) {
  std::string out(kBlobMagic.begin(), kBlobMagic.end());
  out.push_back(static_cast<char>(kBlobVersion));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      char b[4];
      std::memcpy(b, &v, 4);
      out.append(b, 4);
    }
  }
  return out;
}

Matrix decode_blob(const std::string& bytes) {
  constexpr std::size_t header = 8 + 1 + 4 + 4;
  if (bytes.size() < header || !std::equal(kBlobMagic.begin(), kBlobMagic.end(), bytes.begin()))
    throw InvalidInputError("feature blob: bad magic");
  if (static_cast<unsigned char>(bytes[8]) != kBlobVersion)
    throw InvalidInputError("feature blob: unsupported version");
  const std::uint32_t rows = get_u32(bytes, 9);
  const std::uint32_t cols = get_u32(bytes, 13);
  if (bytes.size() != header + std::size_t{rows} * cols * 4)
    throw InvalidInputError("feature blob: size does not match header");
  Matrix m(rows, cols);
  std::size_t at = header;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c, at += 4) {
      float v;
      std::memcpy(&v, bytes.data() + at, 4);
      m(r, c) = v;
    }
  }
  return m;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingInputError("cannot write " + path.string());
  out << text;
}

void write_blob(const fs::path& path, const Matrix& m) { write_text(path, encode_blob(m)); }

Matrix read_blob(const fs::path& path) {
  try {
    return decode_blob(read_text(path));
  } catch (const InvalidInputError& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<ManifestRecord> records;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.at("text").get<std::string>();
      r.audio_path = j.value("audio_path", "");
      r.alignment_path = j.at("alignment_path").get<std::string>();
      r.order_index = j.at("order_index").get<int>();
      r.chapter = j.value("chapter", 0);
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InvalidInputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::string text;
  for (const ManifestRecord& r : records) {
    json j = {{"id", r.id},
              {"text", r.text},
              {"audio_path", r.audio_path},
              {"alignment_path", r.alignment_path},
              {"order_index", r.order_index},
              {"chapter", r.chapter}};
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

AlignmentFile parse_alignment(const std::string& json_text) {
  try {
    const json j = json::parse(json_text);
    AlignmentFile f;
    f.phonemes = j.at("phonemes").get<std::vector<std::string>>();
    f.alignment.phoneme_durations = j.at("durations_frames").get<std::vector<int>>();
    f.alignment.subword_to_phoneme = spans_from_json(j.at("subword_spans"));
    if (f.phonemes.size() != f.alignment.phoneme_durations.size())
      throw InvalidInputError("alignment: phonemes and durations_frames differ in length");
    f.alignment.validate();
    return f;
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("alignment: ") + e.what());
  }
}

std::string format_alignment(const AlignmentFile& file) {
  json j = {{"phonemes", file.phonemes},
            {"durations_frames", file.alignment.phoneme_durations},
            {"subword_spans", spans_json(file.alignment)}};
  return j.dump() + "\n";
}

AlignmentFile read_alignment(const fs::path& path) {
  try {
    return parse_alignment(read_text(path));
  } catch (const InvalidInputError& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

void write_alignment(const fs::path& path, const AlignmentFile& file) {
  write_text(path, format_alignment(file));
}

namespace {

struct Interval {
  double xmin = 0.0;
  double xmax = 0.0;
  std::string text;
};

std::string unquote(std::string s) {
  const auto a = s.find('"');
  const auto b = s.rfind('"');
  if (a == std::string::npos || b == a) return s;
  return s.substr(a + 1, b - a - 1);
}

std::map<std::string, std::vector<Interval>> parse_textgrid(const std::string& text) {
  std::map<std::string, std::vector<Interval>> tiers;
  std::istringstream in(text);
  std::string tier;
  Interval current;
  bool in_interval = false;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    auto key = line.substr(0, eq == std::string::npos ? line.size() : eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    const std::string value = eq == std::string::npos ? "" : line.substr(eq + 1);
    if (key.rfind("intervals [", 0) == 0) {
      in_interval = true;
      current = Interval{};
    } else if (key == "name") {
      tier = unquote(value);
      in_interval = false;
    } else if (in_interval && key == "xmin") {
      current.xmin = std::stod(value);
    } else if (in_interval && key == "xmax") {
      current.xmax = std::stod(value);
    } else if (in_interval && key == "text") {
      current.text = unquote(value);
      tiers[tier].push_back(current);
      in_interval = false;
    }
  }
  return tiers;
}

bool is_silence(const std::string& label) {
  return label.empty() || label == "sil" || label == "sp" || label == "spn";
}

}  // namespace

AlignmentFile textgrid_to_alignment(const std::string& textgrid, const std::string& word_tier,
                                    const std::string& phone_tier, const MelConfig& mel,
                                    int total_frames) {
  auto tiers = parse_textgrid(textgrid);
  if (!tiers.count(word_tier)) throw InvalidInputError("TextGrid: missing tier " + word_tier);
  if (!tiers.count(phone_tier)) throw InvalidInputError("TextGrid: missing tier " + phone_tier);
  const double frames_per_second = mel.sample_rate / mel.hop_size;
  auto to_frame = [&](double seconds) {
    return static_cast<int>(std::lround(seconds * frames_per_second));
  };

  std::vector<Interval> words;
  for (const Interval& w : tiers[word_tier]) {
    if (!is_silence(w.text)) words.push_back(w);
  }
  if (words.empty()) throw InvalidInputError("TextGrid: word tier has no labelled intervals");

  AlignmentFile out;
  const auto& phones = tiers[phone_tier];
  std::vector<int> owner;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const Interval& p = phones[i];
    const int begin = to_frame(p.xmin);
    const int end = i + 1 == phones.size() ? total_frames : to_frame(p.xmax);
    out.phonemes.push_back(is_silence(p.text) ? "sil" : p.text);
    out.alignment.phoneme_durations.push_back(std::max(0, end - begin));
    const double mid = 0.5 * (p.xmin + p.xmax);
    int w = -1;
    for (std::size_t k = 0; k < words.size(); ++k) {
      if (mid >= words[k].xmin && mid < words[k].xmax) w = static_cast<int>(k);
    }
    if (w < 0) w = owner.empty() ? 0 : owner.back();  // silence joins a neighbour
    if (!owner.empty()) w = std::max(w, owner.back());
    owner.push_back(w);
  }
  for (std::size_t i = 0; i < owner.size();) {
    std::size_t j = i;
    while (j + 1 < owner.size() && owner[j + 1] == owner[i]) ++j;
    out.alignment.subword_to_phoneme.push_back({static_cast<int>(i), static_cast<int>(j)});
    i = j + 1;
  }
  out.alignment.validate();
  return out;
}

Waveform read_wav(const fs::path& path) {
  const std::string bytes = read_text(path);
  auto bad = [&](const std::string& why) { return InvalidInputError(path.string() + ": " + why); };
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw bad("not a RIFF/WAVE file");
  int format = 0, channels = 0, bits = 0;
  Waveform wav;
  std::size_t at = 12;
  bool have_fmt = false;
  while (at + 8 <= bytes.size()) {
    const std::string id = bytes.substr(at, 4);
    const std::uint32_t size = get_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + size > bytes.size()) throw bad("truncated chunk " + id);
    if (id == "fmt ") {
      format = get_u16(bytes, body);
      channels = get_u16(bytes, body + 2);
      wav.sample_rate = static_cast<int>(get_u32(bytes, body + 4));
      bits = get_u16(bytes, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt || channels < 1) throw bad("data chunk before fmt chunk");
      const int width = bits / 8;
      const std::size_t frames = size / (static_cast<std::size_t>(width) * channels);
      wav.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          const std::size_t off = body + (f * channels + c) * width;
          if (format == 1 && bits == 16) {
            std::int16_t v;
            std::memcpy(&v, bytes.data() + off, 2);
            acc += v / 32768.0;
          } else if (format == 3 && bits == 32) {
            float v;
            std::memcpy(&v, bytes.data() + off, 4);
            acc += v;
          } else {
            throw bad("unsupported sample format");
          }
        }
        wav.samples[f] = acc / channels;
      }
      return wav;
    }
    at = body + size + (size & 1);
  }
  throw bad("no data chunk");
}

void write_wav(const fs::path& path, const std::vector<double>& samples, int sample_rate) {
  std::string out = "RIFF";
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  const std::uint16_t fmt[2] = {1, 1};
  out.append(reinterpret_cast<const char*>(fmt), 4);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  const std::uint16_t block[2] = {2, 16};
  out.append(reinterpret_cast<const char*>(block), 4);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : samples) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
    out.append(reinterpret_cast<const char*>(&v), 2);
  }
  write_text(path, out);
}

void write_feature_cache(const fs::path& dir, const std::vector<Utterance>& corpus) {
  fs::create_directories(dir / "features");
  std::string index;
  for (const Utterance& u : corpus) {
    const std::string base = "features/" + u.id;
    write_blob(dir / (base + ".mel"), u.mel.frames);
    write_blob(dir / (base + ".f0"), u.pitch);
    write_blob(dir / (base + ".energy"), u.energy);
    json j = {{"id", u.id},
              {"text", u.text},
              {"subwords", u.subwords},
              {"phonemes", u.phonemes},
              {"durations_frames", u.alignment.phoneme_durations},
              {"subword_spans", spans_json(u.alignment)},
              {"order_index", u.order_index},
              {"chapter", u.chapter},
              {"frames", u.mel.num_frames()},
              {"mel", base + ".mel"},
              {"pitch", base + ".f0"},
              {"energy", base + ".energy"}};
    index += j.dump() + "\n";
  }
  write_text(dir / "index.jsonl", index);
  const MelConfig mc = corpus.empty() ? MelConfig{} : corpus.front().mel.config;
  write_text(dir / "mel_config.json", to_json(mc).dump(2) + "\n");
}

std::vector<Utterance> read_feature_cache(const fs::path& dir) {
  const MelConfig mc = mel_config_from_json(json::parse(read_text(dir / "mel_config.json")));
  std::istringstream in(read_text(dir / "index.jsonl"));
  std::vector<Utterance> corpus;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.text = j.at("text").get<std::string>();
    u.subwords = j.at("subwords").get<std::vector<std::string>>();
    u.phonemes = j.at("phonemes").get<std::vector<std::string>>();
    u.alignment.phoneme_durations = j.at("durations_frames").get<std::vector<int>>();
    u.alignment.subword_to_phoneme = spans_from_json(j.at("subword_spans"));
    u.order_index = j.at("order_index").get<int>();
    u.chapter = j.value("chapter", 0);
    u.mel.config = mc;
    // Blobs hold float32; widen back to double.
    u.mel.frames = read_blob(dir / j.at("mel").get<std::string>());
    u.pitch = read_blob(dir / j.at("pitch").get<std::string>()).col(0);
    u.energy = read_blob(dir / j.at("energy").get<std::string>()).col(0);
    u.validate();
    corpus.push_back(std::move(u));
  }
  std::stable_sort(corpus.begin(), corpus.end(), [](const Utterance& a, const Utterance& b) {
    return a.order_index < b.order_index;
  });
  return corpus;
}

}  // namespace msstyle::io
