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

#include "msstyle/vocoder.hpp"

#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "msstyle/errors.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {

namespace {

std::size_t at(long i) { return static_cast<std::size_t>(i); }

using Spectrum = std::vector<std::complex<double>>;

// Samples such that floor(n / hop) + 1 == frames.
long samples_for(long frames, int hop) { return std::max(1L, (frames - 1) * hop + hop / 2); }

}  // namespace

std::vector<double> GriffinLimVocoder::synthesize(const Matrix& log_mel,
                                                  const MelConfig& config) const {
  config.validate();
  MSSTYLE_REQUIRE(log_mel.rows() > 0 && log_mel.cols() == config.n_mels,
                  "vocoder: mel must be T x n_mels with T > 0");
  const int n_fft = config.frame_size, hop = config.hop_size;
  const int bins = n_fft / 2 + 1;
  const long frames = log_mel.rows();
  const long n = samples_for(frames, hop);

  const Matrix fb = mel_filterbank(config);
  const Matrix inverse = fb.completeOrthogonalDecomposition().pseudoInverse();
  // frames x bins linear magnitudes
  const Matrix magnitude = (log_mel.array().exp().matrix() * inverse.transpose()).cwiseMax(0.0);
  const std::vector<double> window = hann_window(n_fft);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  Rng rng(seed_);
  std::vector<Spectrum> stft(at(frames), Spectrum(at(bins)));
  for (long t = 0; t < frames; ++t)
    for (int k = 0; k < bins; ++k)
      stft[at(t)][at(k)] =
          std::polar(magnitude(t, k), rng.uniform(0.0, 2.0 * std::numbers::pi));

  std::vector<double> signal(at(n));
  std::vector<double> frame(at(n_fft));
  const auto offset = [&](long t) { return t * hop - n_fft / 2; };

  const auto overlap_add = [&] {
    std::vector<double> norm(at(n), 0.0);
    std::fill(signal.begin(), signal.end(), 0.0);
    for (long t = 0; t < frames; ++t) {
      fft.inv(frame, stft[at(t)]);
      for (int i = 0; i < n_fft; ++i) {
        const long s = offset(t) + i;
        if (s < 0 || s >= n) continue;
        const double w = window[at(i)];
        signal[at(s)] += w * frame[at(i)];
        norm[at(s)] += w * w;
      }
    }
    for (long s = 0; s < n; ++s)
      if (norm[at(s)] > 1e-8) signal[at(s)] /= norm[at(s)];
  };

  Spectrum analysed;
  for (int it = 0; it < iterations_; ++it) {
    overlap_add();
    for (long t = 0; t < frames; ++t) {
      for (int i = 0; i < n_fft; ++i) {
        const long s = offset(t) + i;
        frame[at(i)] =
            s >= 0 && s < n ? signal[at(s)] * window[at(i)] : 0.0;
      }
      fft.fwd(analysed, frame);
      for (int k = 0; k < bins; ++k) {
        const double phase = std::arg(analysed[at(k)]);
        stft[at(t)][at(k)] = std::polar(magnitude(t, k), phase);
      }
    }
  }
  overlap_add();
  double peak = 0.0;
  for (double s : signal) peak = std::max(peak, std::abs(s));
  if (peak > 0.99)
    for (double& s : signal) s *= 0.99 / peak;
  return signal;
}

Vector vocoded_pitch(const Vocoder& vocoder, const Matrix& log_mel, const MelConfig& config) {
  const std::vector<double> wave = vocoder.synthesize(log_mel, config);
  Vector f0 = estimate_pitch(wave, config);
  MSSTYLE_REQUIRE(f0.size() == log_mel.rows(), "vocoder: pitch track length differs from the mel");
  return f0;
}

}  // namespace msstyle
