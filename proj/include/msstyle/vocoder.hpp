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

// Mel-to-waveform conversion. Only a Griffin-Lim placeholder ships; a neural
// vocoder can be plugged in through the interface.

#include <cstdint>
#include <vector>

#include "msstyle/corpus.hpp"

namespace msstyle {

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  // Waveform whose centered framing yields exactly log_mel.rows() frames.
  virtual std::vector<double> synthesize(const Matrix& log_mel, const MelConfig& config) const = 0;
};

// Pseudo-inverse of the mel filterbank followed by Griffin-Lim phase
// reconstruction. Intelligibility is not a goal.
class GriffinLimVocoder : public Vocoder {
 public:
  explicit GriffinLimVocoder(int iterations = 16, std::uint64_t seed = 0x6c67) :
      iterations_(iterations), seed_(seed) {}
  std::vector<double> synthesize(const Matrix& log_mel, const MelConfig& config) const override;

 private:
  int iterations_;
  std::uint64_t seed_;
};

// Pitch track of a vocoded mel, one value per mel frame.
Vector vocoded_pitch(const Vocoder& vocoder, const Matrix& log_mel, const MelConfig& config);

}  // namespace msstyle
