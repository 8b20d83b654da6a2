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

// On-disk formats: feature blobs, corpus manifest, alignment files,
// TextGrid conversion, PCM WAV and the prepared feature cache.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "msstyle/corpus.hpp"

namespace msstyle::io {

namespace fs = std::filesystem;

// Feature blob: 8-byte magic, version byte, little-endian u32 rows and
// cols, then rows*cols little-endian float32 values in row-major order.
inline constexpr std::array<char, 8> kBlobMagic = {'M', 'S', 'S', 'T', 'F', 'E', 'A', 'T'};
inline constexpr unsigned char kBlobVersion = 1;

std::string encode_blob(const Matrix& m);
Matrix decode_blob(const std::string& bytes);
void write_blob(const fs::path& path, const Matrix& m);
Matrix read_blob(const fs::path& path);

struct ManifestRecord {
  std::string id;
  std::string text;
  std::string audio_path;
  std::string alignment_path;
  int order_index = 0;
  int chapter = 0;  // optional in the file; defaults to 0
};

// JSON lines; relative paths stay as written.
std::vector<ManifestRecord> read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records);

struct AlignmentFile {
  std::vector<std::string> phonemes;
  AlignmentMap alignment;
};

// {"phonemes": [...], "durations_frames": [...], "subword_spans": [[first, last], ...]}
// Spans are inclusive phoneme indices.
AlignmentFile parse_alignment(const std::string& json_text);
std::string format_alignment(const AlignmentFile& file);
AlignmentFile read_alignment(const fs::path& path);
void write_alignment(const fs::path& path, const AlignmentFile& file);

// Builds an alignment from a long-format Praat TextGrid with a word tier and
// a phone tier. Interval edges are rounded to frame indices (seconds * sr /
// hop); empty-label phone intervals become "sil" phonemes owned by the
// preceding word (or the following one at the start).
AlignmentFile textgrid_to_alignment(const std::string& textgrid, const std::string& word_tier,
                                    const std::string& phone_tier, const MelConfig& mel,
                                    int total_frames);

struct Waveform {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 0;
};
// 16-bit PCM or 32-bit float RIFF/WAVE; multi-channel input is averaged.
Waveform read_wav(const fs::path& path);
void write_wav(const fs::path& path, const std::vector<double>& samples, int sample_rate);

// Prepared-feature cache: index.jsonl plus per-utterance mel/pitch/energy
// blobs under `dir`.
void write_feature_cache(const fs::path& dir, const std::vector<Utterance>& corpus);
std::vector<Utterance> read_feature_cache(const fs::path& dir);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace msstyle::io
