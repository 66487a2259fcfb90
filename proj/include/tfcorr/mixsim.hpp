#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tfcorr/stft.hpp"

namespace tfcorr {

// Knobs for the synthetic scene sampler. Geometry is a linear mic array at
// the origin with sources scattered around it; acoustics are a fractional
// delay + 1/r attenuation direct path and a stochastic exponential tail.
struct SceneConfig {
  int sample_rate = 8000;
  int mics = 2;
  int sources = 2;
  double duration_s = 2.4;
  double mic_spacing = 0.05;  // meters between adjacent mics
  double src_dist_min = 1.0;  // source distance from the array center
  double src_dist_max = 2.5;
  double t60_min = 0.2;
  double t60_max = 0.6;
  double snr_min = 0.0;  // dB
  double snr_max = 20.0;
  double overlap_min = 0.3;  // fraction of the clip where speakers overlap
  double overlap_max = 0.7;
  // per-sample tail gain before the decay envelope; with the exponential
  // envelope this puts tail-to-direct energy near 1.45*t60 at 8 kHz, i.e.
  // a direct-dominated room over the default t60 range
  double tail_level = 0.05;
  double speed_of_sound = 343.0;

  int64_t num_samples() const {
    return static_cast<int64_t>(duration_s * sample_rate + 0.5);
  }
};

struct RoomScene {
  std::vector<std::array<double, 3>> mic_pos;
  std::vector<std::array<double, 3>> src_pos;
  double t60 = 0.3;
  double snr_db = 10.0;
  double overlap = 0.5;
  double speed_of_sound = 343.0;
};

RoomScene sample_scene(const SceneConfig& cfg, std::mt19937_64& rng);

// Impulse response split into the direct path (windowed-sinc fractional
// delay, 32 taps, 1/r amplitude) and the full response including an
// exponentially decaying white tail that reaches -60 dB at t60 and only
// occupies samples after the direct delay.
struct Rir {
  std::vector<float> direct;
  std::vector<float> full;
  double delay_samples = 0.0;
  double attenuation = 1.0;
};

Rir synth_rir(const RoomScene& scene, const SceneConfig& cfg, int source, int mic,
              std::mt19937_64& rng);

struct MixtureExample {
  Waveform mixture;                // (M, N): sum of images plus noise
  std::vector<Waveform> images;    // K reverberant images (M, N)
  std::vector<Waveform> targets;   // K direct-path images (M, N)
  Waveform noise;                  // (M, N)
  RoomScene scene;
  uint64_t seed = 0;
};

// Places the dry sources with the scene's overlap ratio, renders reverberant
// and direct-path images, and adds per-mic colored noise scaled exactly to
// the scene SNR (noise vs the sum of reverberant images). The stored mixture
// equals the float32 sum of stored images plus stored noise, bit for bit.
// Throws if a dry source is shorter than its placement window.
MixtureExample make_mixture(const SceneConfig& cfg, const RoomScene& scene,
                            const std::vector<std::vector<float>>& dry,
                            uint64_t seed);

// Self-contained speech-like test signal: a pitch random walk driving a
// harmonic series with formant-style spectral bumps and syllabic amplitude
// modulation. RMS-normalized to 0.1.
std::vector<float> speechlike(int sample_rate, int64_t num_samples,
                              std::mt19937_64& rng);

struct ManifestEntry {
  std::string mixture;               // paths relative to the manifest's dir
  std::vector<std::string> targets;  // direct-path targets, all mics
  std::string noise;
  double duration_s = 0.0;
  uint64_t seed = 0;
};

struct DatasetSpec {
  SceneConfig scene;
  int count = 32;
  uint64_t seed = 1;
};

// Writes <dir>/exNNN.{mix,sK,noise}.wav (float32) plus <dir>/manifest.jsonl
// and returns the manifest entries. Fully determined by spec.seed.
std::vector<ManifestEntry> generate_dataset(const std::string& dir,
                                            const DatasetSpec& spec);

std::vector<ManifestEntry> read_manifest(const std::string& path);

// Loads the waveforms referenced by one manifest entry.
struct LoadedExample {
  Waveform mixture;
  std::vector<Waveform> targets;
};
LoadedExample load_example(const std::string& manifest_dir,
                           const ManifestEntry& entry);

}  // namespace tfcorr
