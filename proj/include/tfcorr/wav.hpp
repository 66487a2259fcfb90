#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tfcorr::wav {

// Interleaved multi-channel audio in [-1, 1] floats.
struct WavData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<float> samples;  // size = frames * channels

  int64_t frames() const {
    return channels ? static_cast<int64_t>(samples.size()) / channels : 0;
  }
};

// Reads RIFF/WAVE with PCM-16 or IEEE float32 samples; anything else errors.
WavData read_wav(const std::string& path);

// Writes IEEE float32 (default) or PCM-16 with clipping.
void write_wav(const std::string& path, const WavData& w, bool float32 = true);

}  // namespace tfcorr::wav
