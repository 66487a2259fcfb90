#pragma once

#include <string>
#include <vector>

#include "tfcorr/autodiff.hpp"
#include "tfcorr/wav.hpp"

namespace tfcorr {

struct Waveform {
  int sample_rate = 0;
  Tensor samples;  // (channels, num_samples)

  int64_t channels() const { return samples.defined() ? samples.extent(0) : 0; }
  int64_t num_samples() const { return samples.defined() ? samples.extent(1) : 0; }
};

// Interleaved file layout <-> planar tensor layout.
Waveform from_wavdata(const wav::WavData& w);
wav::WavData to_wavdata(const Waveform& w);

// Uncompressed spectrogram pair. Frames are centered: frame t covers input
// samples [t*hop - n_fft/2, t*hop + n_fft/2).
struct ComplexSpectrogram {
  Tensor re, im;  // (channels, frames, n_fft/2 + 1)
  int n_fft = 0;
  int hop = 0;
  int sample_rate = 0;
  int64_t num_samples = 0;  // original length, needed for exact inversion
  std::string window = "sqrt_hann";

  int64_t channels() const { return re.defined() ? re.extent(0) : 0; }
  int64_t frames() const { return re.defined() ? re.extent(1) : 0; }
  int64_t bins() const { return re.defined() ? re.extent(2) : 0; }
};

// sin(pi*n/N): the square root of a periodic Hann window, used for both
// analysis and synthesis.
std::vector<double> sqrt_hann(int n_fft);

int64_t stft_frames(int64_t num_samples, int hop);

// n_fft must be a power of two, 1 <= hop <= n_fft/2. All transforms run in
// double internally regardless of tensor dtype.
ComplexSpectrogram stft(const Waveform& w, int n_fft, int hop);

// Overlap-add with synthesis windowing and envelope normalization; exact
// round trip (up to float rounding) for any signal length.
Waveform istft(const ComplexSpectrogram& s);

// Differentiable inverse on (channels, frames, bins) vars; returns
// (channels, num_samples).
ad::Var istft_var(const ad::Var& re, const ad::Var& im, int n_fft, int hop,
                  int64_t num_samples);

}  // namespace tfcorr
