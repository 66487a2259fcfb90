#pragma once

#include <cstdint>
#include <vector>

#include "tfcorr/model.hpp"
#include "tfcorr/stft.hpp"

namespace tfcorr {

// Sliding-window layout for continuous separation. Each window sees
// history_s of past context, current_s of fresh signal and future_s of
// lookahead; windows advance by current_s, so consecutive windows overlap by
// history_s + future_s.
struct ChunkSchedule {
  double history_s = 1.2;
  double current_s = 0.8;
  double future_s = 0.4;

  int64_t history_samples(int sample_rate) const;
  int64_t hop_samples(int sample_rate) const;     // current block
  int64_t window_samples(int sample_rate) const;  // history + current + future
  void validate() const;
};

// One window over the stream. start may be negative and start + length may
// run past the stream end; out-of-range samples read as zero. emit_offset /
// emit_length select the window-local current block that reaches the output,
// and emit_to is its global start.
struct ChunkSpan {
  int64_t start = 0;
  int64_t length = 0;
  int64_t emit_offset = 0;
  int64_t emit_length = 0;
  int64_t emit_to = 0;
};

// Windows of the full schedule length at a hop of one current block;
// ceil(total_len / hop) of them, so every sample lands in exactly one
// emitted block. Needs total_len > 0.
std::vector<ChunkSpan> plan_chunks(int64_t total_len, int sample_rate,
                                   const ChunkSchedule& sched = {});

// Copy of one window from a (channels, N) waveform, zero padded outside the
// recorded range.
Waveform extract_window(const Waveform& w, const ChunkSpan& span);

// sqrt(re^2 + im^2), elementwise over equal-shaped tensors.
Tensor magnitude_plane(const Tensor& re, const Tensor& im);

// Maps each window's local source order onto stable global stream ids by
// minimizing the summed L1 magnitude distance to the previous window over
// the frames the two windows share. Exhaustive over source permutations.
class Stitcher {
 public:
  explicit Stitcher(int sources);

  // mags holds one (T, F) magnitude tensor per local source, covering the
  // full window. Returns the assignment a with stream i taking local source
  // a[i]; the first window maps identically. overlap_frames counts the
  // trailing frames of the previous window that the new window re-covers.
  std::vector<int> observe(const std::vector<Tensor>& mags,
                           int64_t overlap_frames);

  bool primed() const { return !prev_.empty(); }

 private:
  int sources_;
  std::vector<Tensor> prev_;  // previous window's magnitudes in stream order
};

// Complex (K, T, F) planes, one per source.
struct SourcePlanes {
  Tensor re, im;
};

// Per-frequency multi-channel Wiener filter from chunk-averaged spatial
// covariances. x planes are the (M, T, F) mixture spectra, est planes the
// (K, M, T, F) first-stage estimates. For each source and frequency,
//   Phi_s = mean_t y y^H,  Phi_x = mean_t x x^H,
//   w = (Phi_x + delta I)^{-1} Phi_s e_ref,  delta = loading tr(Phi_x) / M,
// and the output plane is w^H x_tf.
SourcePlanes mwf_beamformer(const Tensor& x_re, const Tensor& x_im,
                            const Tensor& est_re, const Tensor& est_im,
                            int ref_mic = 0, double loading = 1e-3);

// Enhancement pass: for every source, stack the mixture with that source's
// beamformed plane as an (M+1)-channel input and run the single-output
// enhancement model. The model must be configured for mics = M + 1 and one
// source.
SourcePlanes second_stage(const TfCorrNet& enhance, const Tensor& x_re,
                          const Tensor& x_im, const SourcePlanes& bf);

struct SeparatedStreams {
  int sample_rate = 0;
  std::vector<std::vector<float>> streams;  // sources x num_samples
};

struct ChunkLogEntry {
  int64_t index = 0;
  int64_t start = 0;  // global sample index of the window
  std::vector<int> assignment;
  double seconds = 0.0;  // wall time spent on the window
};

// Whole-signal separation in one network pass; reference-channel outputs.
// A second-stage model, when given, refines each source through the Wiener
// filter and enhancement pass (the first stage must then be mimo).
SeparatedStreams separate_once(const TfCorrNet& model, const Waveform& mix,
                               const TfCorrNet* enhance = nullptr);

// Chunk-wise separation with cross-window stitching; one log entry per
// window when log is given.
SeparatedStreams separate_css(const TfCorrNet& model, const Waveform& mix,
                              const ChunkSchedule& sched = {},
                              std::vector<ChunkLogEntry>* log = nullptr,
                              const TfCorrNet* enhance = nullptr);

}  // namespace tfcorr
