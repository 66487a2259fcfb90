#include "tfcorr/css.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include "tfcorr/loss.hpp"

namespace tfcorr {

int64_t ChunkSchedule::history_samples(int sample_rate) const {
  return llround(history_s * sample_rate);
}

int64_t ChunkSchedule::hop_samples(int sample_rate) const {
  return llround(current_s * sample_rate);
}

int64_t ChunkSchedule::window_samples(int sample_rate) const {
  return history_samples(sample_rate) + hop_samples(sample_rate) +
         llround(future_s * sample_rate);
}

void ChunkSchedule::validate() const {
  TFC_CHECK(current_s > 0.0 && history_s >= 0.0 && future_s >= 0.0,
            "chunk schedule: needs a positive current block and nonnegative "
            "context blocks");
}

std::vector<ChunkSpan> plan_chunks(int64_t total_len, int sample_rate,
                                   const ChunkSchedule& sched) {
  TFC_CHECK(total_len > 0, "plan_chunks: total_len must be positive, got "
                               << total_len);
  TFC_CHECK(sample_rate > 0, "plan_chunks: sample_rate must be positive");
  sched.validate();
  const int64_t history = sched.history_samples(sample_rate);
  const int64_t hop = sched.hop_samples(sample_rate);
  TFC_CHECK(hop > 0, "chunk schedule: current block rounds to zero samples");
  const int64_t window = sched.window_samples(sample_rate);

  const int64_t n = (total_len + hop - 1) / hop;
  std::vector<ChunkSpan> spans(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    ChunkSpan& s = spans[static_cast<size_t>(i)];
    s.start = i * hop - history;
    s.length = window;
    s.emit_offset = history;
    s.emit_to = i * hop;
    s.emit_length = std::min(hop, total_len - i * hop);
  }
  return spans;
}

Waveform extract_window(const Waveform& w, const ChunkSpan& span) {
  TFC_CHECK(w.samples.defined() && w.samples.rank() == 2,
            "extract_window: waveform tensor must be (channels, samples)");
  TFC_CHECK(span.length > 0, "extract_window: empty span");
  const int64_t channels = w.channels();
  const int64_t n = w.num_samples();
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = Tensor::zeros({channels, span.length}, w.samples.dtype());

  const int64_t src_begin = std::max<int64_t>(span.start, 0);
  const int64_t src_end = std::min(span.start + span.length, n);
  if (src_begin >= src_end) return out;  // window entirely outside the clip
  const int64_t count = src_end - src_begin;
  const int64_t dst_begin = src_begin - span.start;
  dispatch(w.samples.dtype(), [&](auto zero) {
    using R = decltype(zero);
    auto src = w.samples.data<R>();
    auto dst = out.samples.data<R>();
    for (int64_t c = 0; c < channels; ++c)
      std::memcpy(dst.data() + c * span.length + dst_begin,
                  src.data() + c * n + src_begin,
                  static_cast<size_t>(count) * sizeof(R));
  });
  return out;
}

Tensor magnitude_plane(const Tensor& re, const Tensor& im) {
  TFC_CHECK(re.defined() && im.defined() && same_shape(re.shape(), im.shape()) &&
                re.dtype() == im.dtype(),
            "magnitude_plane: re/im must match");
  Tensor out(re.shape(), re.dtype());
  dispatch(re.dtype(), [&](auto zero) {
    using R = decltype(zero);
    auto a = re.data<R>();
    auto b = im.data<R>();
    auto o = out.data<R>();
    for (size_t i = 0; i < o.size(); ++i)
      o[i] = std::sqrt(a[i] * a[i] + b[i] * b[i]);
  });
  return out;
}

Stitcher::Stitcher(int sources) : sources_(sources) {
  TFC_CHECK(sources >= 1 && sources <= 6,
            "stitcher: source count " << sources
                                      << " outside the exhaustive range");
}

std::vector<int> Stitcher::observe(const std::vector<Tensor>& mags,
                                   int64_t overlap_frames) {
  TFC_CHECK(static_cast<int>(mags.size()) == sources_,
            "stitcher: expected " << sources_ << " magnitude planes, got "
                                  << mags.size());
  for (const Tensor& m : mags)
    TFC_CHECK(m.defined() && m.rank() == 2 &&
                  same_shape(m.shape(), mags[0].shape()),
              "stitcher: magnitude planes must share one (frames, bins) shape");

  std::vector<int> assignment(static_cast<size_t>(sources_));
  std::iota(assignment.begin(), assignment.end(), 0);
  if (prev_.empty()) {
    prev_ = mags;
    return assignment;
  }

  TFC_CHECK(overlap_frames >= 1, "stitcher: overlap region is empty");
  TFC_CHECK(prev_[0].extent(1) == mags[0].extent(1),
            "stitcher: frequency bins changed between windows");
  const int64_t t_prev = prev_[0].extent(0);
  const int64_t t_new = mags[0].extent(0);
  const int64_t overlap = std::min({overlap_frames, t_prev, t_new});
  const int64_t bins = mags[0].extent(1);

  // cost[i][j]: L1 distance between stream i's tail and local source j's head
  std::vector<std::vector<double>> cost(
      static_cast<size_t>(sources_),
      std::vector<double>(static_cast<size_t>(sources_), 0.0));
  for (int i = 0; i < sources_; ++i)
    for (int j = 0; j < sources_; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < overlap; ++t)
        for (int64_t f = 0; f < bins; ++f)
          acc += std::fabs(prev_[static_cast<size_t>(i)].at(
                               (t_prev - overlap + t) * bins + f) -
                           mags[static_cast<size_t>(j)].at(t * bins + f));
      cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = acc;
    }
  assignment = best_assignment(cost).first;

  std::vector<Tensor> next(static_cast<size_t>(sources_));
  for (int i = 0; i < sources_; ++i)
    next[static_cast<size_t>(i)] = mags[static_cast<size_t>(assignment[i])];
  prev_ = std::move(next);
  return assignment;
}

SourcePlanes mwf_beamformer(const Tensor& x_re, const Tensor& x_im,
                            const Tensor& est_re, const Tensor& est_im,
                            int ref_mic, double loading) {
  TFC_CHECK(x_re.defined() && x_re.rank() == 3 &&
                same_shape(x_re.shape(), x_im.shape()),
            "mwf: mixture planes must be (mics, frames, bins)");
  TFC_CHECK(est_re.defined() && est_re.rank() == 4 &&
                same_shape(est_re.shape(), est_im.shape()),
            "mwf: estimate planes must be (sources, mics, frames, bins)");
  const int64_t mics = x_re.extent(0);
  const int64_t frames = x_re.extent(1);
  const int64_t bins = x_re.extent(2);
  const int64_t sources = est_re.extent(0);
  TFC_CHECK(est_re.extent(1) == mics && est_re.extent(2) == frames &&
                est_re.extent(3) == bins,
            "mwf: estimates must cover the mixture grid, got "
                << shape_str(est_re.shape()) << " vs "
                << shape_str(x_re.shape()));
  TFC_CHECK(ref_mic >= 0 && ref_mic < mics,
            "mwf: ref_mic " << ref_mic << " out of range");
  TFC_CHECK(frames > 0, "mwf: no frames to average over");

  const Tensor xr = x_re.astype(Dtype::F64), xi = x_im.astype(Dtype::F64);
  const Tensor yr = est_re.astype(Dtype::F64), yi = est_im.astype(Dtype::F64);
  auto xrs = xr.data<double>(), xis = xi.data<double>();
  auto yrs = yr.data<double>(), yis = yi.data<double>();

  Tensor out_re = Tensor::zeros({sources, frames, bins}, Dtype::F64);
  Tensor out_im = Tensor::zeros({sources, frames, bins}, Dtype::F64);
  auto ore = out_re.data<double>(), oim = out_im.data<double>();

  using Cd = std::complex<double>;
  Eigen::MatrixXcd phi_x(mics, mics), phi_s(mics, mics), loaded(mics, mics);
  Eigen::VectorXcd v(mics), w(mics);
  const int64_t plane = frames * bins;

  for (int64_t f = 0; f < bins; ++f) {
    phi_x.setZero();
    for (int64_t t = 0; t < frames; ++t) {
      for (int64_t m = 0; m < mics; ++m) {
        const int64_t idx = m * plane + t * bins + f;
        v(m) = Cd(xrs[static_cast<size_t>(idx)], xis[static_cast<size_t>(idx)]);
      }
      phi_x.noalias() += v * v.adjoint();
    }
    phi_x /= static_cast<double>(frames);
    const double tr = phi_x.trace().real();
    if (!(tr > 0.0)) continue;  // silent bin: leave zeros
    const double delta = loading * tr / static_cast<double>(mics);
    loaded = phi_x;
    loaded.diagonal().array() += delta;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(loaded);

    for (int64_t k = 0; k < sources; ++k) {
      phi_s.setZero();
      for (int64_t t = 0; t < frames; ++t) {
        for (int64_t m = 0; m < mics; ++m) {
          const int64_t idx = ((k * mics + m) * frames + t) * bins + f;
          v(m) = Cd(yrs[static_cast<size_t>(idx)],
                    yis[static_cast<size_t>(idx)]);
        }
        phi_s.noalias() += v * v.adjoint();
      }
      phi_s /= static_cast<double>(frames);
      w = lu.solve(phi_s.col(ref_mic));

      for (int64_t t = 0; t < frames; ++t) {
        Cd acc(0.0, 0.0);
        for (int64_t m = 0; m < mics; ++m) {
          const int64_t idx = m * plane + t * bins + f;
          acc += std::conj(w(m)) * Cd(xrs[static_cast<size_t>(idx)],
                                      xis[static_cast<size_t>(idx)]);
        }
        const int64_t oidx = k * plane + t * bins + f;
        ore[static_cast<size_t>(oidx)] = acc.real();
        oim[static_cast<size_t>(oidx)] = acc.imag();
      }
    }
  }
  return {out_re.astype(x_re.dtype()), out_im.astype(x_re.dtype())};
}

SourcePlanes second_stage(const TfCorrNet& enhance, const Tensor& x_re,
                          const Tensor& x_im, const SourcePlanes& bf) {
  const ModelConfig& cfg = enhance.config();
  TFC_CHECK(x_re.defined() && x_re.rank() == 3 &&
                same_shape(x_re.shape(), x_im.shape()),
            "second stage: mixture planes must be (mics, frames, bins)");
  TFC_CHECK(bf.re.defined() && bf.re.rank() == 3 &&
                same_shape(bf.re.shape(), bf.im.shape()),
            "second stage: beamformed planes must be (sources, frames, bins)");
  const int64_t mics = x_re.extent(0);
  const int64_t frames = x_re.extent(1);
  const int64_t bins = x_re.extent(2);
  const int64_t sources = bf.re.extent(0);
  TFC_CHECK(bf.re.extent(1) == frames && bf.re.extent(2) == bins,
            "second stage: beamformed planes must cover the mixture grid");
  TFC_CHECK(cfg.mics == mics + 1,
            "second stage: model expects " << cfg.mics
                                           << " channels, stacking provides "
                                           << mics + 1);
  TFC_CHECK(cfg.sources == 1 && cfg.out_channels() == 1,
            "second stage: enhancement model must be single-source miso");
  TFC_CHECK(bins == cfg.freq_bins(),
            "second stage: bin count " << bins << " does not match the model");

  Tensor out_re = Tensor::zeros({sources, frames, bins}, x_re.dtype());
  Tensor out_im = Tensor::zeros({sources, frames, bins}, x_re.dtype());
  const int64_t plane = frames * bins;

  for (int64_t k = 0; k < sources; ++k) {
    Tensor in_re = Tensor::zeros({mics + 1, frames, bins}, x_re.dtype());
    Tensor in_im = Tensor::zeros({mics + 1, frames, bins}, x_re.dtype());
    dispatch(x_re.dtype(), [&](auto zero) {
      using R = decltype(zero);
      std::memcpy(in_re.data<R>().data(), x_re.data<R>().data(),
                  static_cast<size_t>(mics * plane) * sizeof(R));
      std::memcpy(in_im.data<R>().data(), x_im.data<R>().data(),
                  static_cast<size_t>(mics * plane) * sizeof(R));
      std::memcpy(in_re.data<R>().data() + mics * plane,
                  bf.re.data<R>().data() + k * plane,
                  static_cast<size_t>(plane) * sizeof(R));
      std::memcpy(in_im.data<R>().data() + mics * plane,
                  bf.im.data<R>().data() + k * plane,
                  static_cast<size_t>(plane) * sizeof(R));
      SpectraSet y =
          enhance.forward(ad::constant(in_re), ad::constant(in_im));
      std::memcpy(out_re.data<R>().data() + k * plane,
                  y.re->value.data<R>().data(),
                  static_cast<size_t>(plane) * sizeof(R));
      std::memcpy(out_im.data<R>().data() + k * plane,
                  y.im->value.data<R>().data(),
                  static_cast<size_t>(plane) * sizeof(R));
    });
  }
  return {out_re, out_im};
}

namespace {

double reference_rms(const Waveform& w) {
  TFC_CHECK(w.channels() > 0 && w.num_samples() > 0,
            "separate: empty input waveform");
  double acc = 0.0;
  const int64_t n = w.num_samples();
  for (int64_t i = 0; i < n; ++i) {
    const double v = w.samples.at(i);  // channel 0 occupies the first row
    acc += v * v;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

Waveform scaled_copy(const Waveform& w, double factor) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = w.samples.clone();
  dispatch(out.samples.dtype(), [&](auto zero) {
    using R = decltype(zero);
    for (R& v : out.samples.data<R>()) v = static_cast<R>(v * factor);
  });
  return out;
}

struct ForwardResult {
  ComplexSpectrogram spec;  // mixture spectra
  Tensor est_re, est_im;    // (K, M_out, T, F)
};

ForwardResult run_model(const TfCorrNet& model, const Waveform& w) {
  const ModelConfig& cfg = model.config();
  TFC_CHECK(w.channels() == cfg.mics, "separate: expected "
                                          << cfg.mics
                                          << " input channels, got "
                                          << w.channels());
  TFC_CHECK(w.sample_rate == cfg.sample_rate,
            "separate: sample rate " << w.sample_rate
                                     << " does not match the model's "
                                     << cfg.sample_rate);
  ForwardResult r;
  r.spec = stft(w, cfg.n_fft, cfg.hop);
  SpectraSet y =
      model.forward(ad::constant(r.spec.re), ad::constant(r.spec.im));
  r.est_re = y.re->value;
  r.est_im = y.im->value;
  return r;
}

// Reference-channel slice (K, T, F) of a (K, M_out, T, F) stack.
SourcePlanes ref_planes(const Tensor& re, const Tensor& im) {
  const int64_t k = re.extent(0), m = re.extent(1);
  const int64_t plane = re.extent(2) * re.extent(3);
  Tensor out_re = Tensor::zeros({k, re.extent(2), re.extent(3)}, re.dtype());
  Tensor out_im = Tensor::zeros({k, re.extent(2), re.extent(3)}, re.dtype());
  dispatch(re.dtype(), [&](auto zero) {
    using R = decltype(zero);
    for (int64_t s = 0; s < k; ++s) {
      std::memcpy(out_re.data<R>().data() + s * plane,
                  re.data<R>().data() + s * m * plane,
                  static_cast<size_t>(plane) * sizeof(R));
      std::memcpy(out_im.data<R>().data() + s * plane,
                  im.data<R>().data() + s * m * plane,
                  static_cast<size_t>(plane) * sizeof(R));
    }
  });
  return {out_re, out_im};
}

void check_two_stage(const TfCorrNet& model, const TfCorrNet* enhance) {
  if (!enhance) return;
  const ModelConfig& a = model.config();
  const ModelConfig& b = enhance->config();
  TFC_CHECK(a.head_mode == "mimo",
            "second stage: the first stage must be mimo to feed the "
            "beamformer");
  TFC_CHECK(a.sample_rate == b.sample_rate && a.n_fft == b.n_fft &&
                a.hop == b.hop,
            "second stage: both stages must share one STFT grid");
}

// Final per-source spectra of one network pass, after the optional
// beamformer + enhancement refinement.
SourcePlanes stage_output(const TfCorrNet* enhance, const ForwardResult& fw) {
  if (!enhance) return ref_planes(fw.est_re, fw.est_im);
  SourcePlanes bf =
      mwf_beamformer(fw.spec.re, fw.spec.im, fw.est_re, fw.est_im);
  return second_stage(*enhance, fw.spec.re, fw.spec.im, bf);
}

// (K, T, F) planes back to one waveform row per source.
Waveform invert_planes(const SourcePlanes& p, const ComplexSpectrogram& like) {
  ComplexSpectrogram s;
  s.re = p.re.astype(Dtype::F32);
  s.im = p.im.astype(Dtype::F32);
  s.n_fft = like.n_fft;
  s.hop = like.hop;
  s.sample_rate = like.sample_rate;
  s.num_samples = like.num_samples;
  s.window = like.window;
  return istft(s);
}

}  // namespace

SeparatedStreams separate_once(const TfCorrNet& model, const Waveform& mix,
                               const TfCorrNet* enhance) {
  check_two_stage(model, enhance);
  const double rms = reference_rms(mix);
  const double gain = rms > 1e-12 ? rms : 1.0;
  const Waveform norm = scaled_copy(mix, 1.0 / gain);

  ForwardResult fw = run_model(model, norm);
  SourcePlanes planes = stage_output(enhance, fw);
  Waveform y = invert_planes(planes, fw.spec);

  SeparatedStreams out;
  out.sample_rate = mix.sample_rate;
  const int64_t n = y.num_samples();
  out.streams.assign(static_cast<size_t>(model.config().sources),
                     std::vector<float>(static_cast<size_t>(n)));
  auto src = y.samples.data<float>();
  for (size_t k = 0; k < out.streams.size(); ++k)
    for (int64_t i = 0; i < n; ++i)
      out.streams[k][static_cast<size_t>(i)] =
          static_cast<float>(src[k * static_cast<size_t>(n) +
                                 static_cast<size_t>(i)] *
                             gain);
  return out;
}

SeparatedStreams separate_css(const TfCorrNet& model, const Waveform& mix,
                              const ChunkSchedule& sched,
                              std::vector<ChunkLogEntry>* log,
                              const TfCorrNet* enhance) {
  check_two_stage(model, enhance);
  const ModelConfig& cfg = model.config();
  const int64_t total = mix.num_samples();
  const std::vector<ChunkSpan> spans =
      plan_chunks(total, mix.sample_rate, sched);

  const double rms = reference_rms(mix);
  const double gain = rms > 1e-12 ? rms : 1.0;
  const Waveform norm = scaled_copy(mix, 1.0 / gain);

  // consecutive windows are offset by this many STFT frames
  const int64_t hop_frames =
      llround(static_cast<double>(sched.hop_samples(mix.sample_rate)) /
              cfg.hop);

  SeparatedStreams out;
  out.sample_rate = mix.sample_rate;
  out.streams.assign(static_cast<size_t>(cfg.sources),
                     std::vector<float>(static_cast<size_t>(total), 0.0f));
  Stitcher stitcher(cfg.sources);

  for (size_t ci = 0; ci < spans.size(); ++ci) {
    const auto t0 = std::chrono::steady_clock::now();
    const ChunkSpan& span = spans[ci];
    const Waveform window = extract_window(norm, span);
    ForwardResult fw = run_model(model, window);
    SourcePlanes planes = stage_output(enhance, fw);

    std::vector<Tensor> mags(static_cast<size_t>(cfg.sources));
    const int64_t frames = planes.re.extent(1);
    const int64_t bins = planes.re.extent(2);
    for (int k = 0; k < cfg.sources; ++k) {
      Tensor mre = Tensor::zeros({frames, bins}, planes.re.dtype());
      Tensor mim = Tensor::zeros({frames, bins}, planes.re.dtype());
      dispatch(planes.re.dtype(), [&](auto zero) {
        using R = decltype(zero);
        std::memcpy(mre.data<R>().data(),
                    planes.re.data<R>().data() + k * frames * bins,
                    static_cast<size_t>(frames * bins) * sizeof(R));
        std::memcpy(mim.data<R>().data(),
                    planes.im.data<R>().data() + k * frames * bins,
                    static_cast<size_t>(frames * bins) * sizeof(R));
      });
      mags[static_cast<size_t>(k)] = magnitude_plane(mre, mim);
    }
    const int64_t overlap = std::max<int64_t>(frames - hop_frames, 1);
    const std::vector<int> assignment = stitcher.observe(mags, overlap);

    Waveform y = invert_planes(planes, fw.spec);
    auto src = y.samples.data<float>();
    const int64_t wlen = y.num_samples();
    for (int i = 0; i < cfg.sources; ++i) {
      const int64_t base = assignment[static_cast<size_t>(i)] * wlen;
      for (int64_t j = 0; j < span.emit_length; ++j)
        out.streams[static_cast<size_t>(i)]
                   [static_cast<size_t>(span.emit_to + j)] =
            static_cast<float>(
                src[static_cast<size_t>(base + span.emit_offset + j)] * gain);
    }

    if (log) {
      ChunkLogEntry e;
      e.index = static_cast<int64_t>(ci);
      e.start = span.start;
      e.assignment = assignment;
      e.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
      log->push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace tfcorr
