#include "tfcorr/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "tfcorr/fft.hpp"

namespace tfcorr {

Waveform from_wavdata(const wav::WavData& w) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  const int64_t ch = w.channels, n = w.frames();
  Tensor t({ch, n}, Dtype::F32);
  auto p = t.data<float>();
  for (int64_t c = 0; c < ch; ++c)
    for (int64_t i = 0; i < n; ++i)
      p[c * n + i] = w.samples[static_cast<size_t>(i * ch + c)];
  out.samples = std::move(t);
  return out;
}

wav::WavData to_wavdata(const Waveform& w) {
  TFC_CHECK(w.samples.defined() && w.samples.dtype() == Dtype::F32,
            "to_wavdata: need a defined f32 waveform");
  wav::WavData out;
  out.sample_rate = w.sample_rate;
  out.channels = static_cast<int>(w.channels());
  const int64_t ch = w.channels(), n = w.num_samples();
  out.samples.resize(static_cast<size_t>(ch * n));
  auto p = const_cast<Tensor&>(w.samples).data<float>();
  for (int64_t c = 0; c < ch; ++c)
    for (int64_t i = 0; i < n; ++i)
      out.samples[static_cast<size_t>(i * ch + c)] = p[c * n + i];
  return out;
}

namespace {

void check_params(int n_fft, int hop) {
  TFC_CHECK(fft::is_pow2(n_fft) && n_fft >= 4,
            "stft: n_fft must be a power of two >= 4, got " << n_fft);
  TFC_CHECK(hop >= 1 && hop <= n_fft / 2,
            "stft: hop must be in [1, n_fft/2], got " << hop);
}

// Sum of squared synthesis windows at each output sample; positive for
// hop <= n_fft/2 with centered framing.
std::vector<double> ola_envelope(const std::vector<double>& win, int hop,
                                 int64_t num_samples, int64_t frames) {
  const int64_t n_fft = static_cast<int64_t>(win.size());
  const int64_t pad = n_fft / 2;
  std::vector<double> env(static_cast<size_t>(num_samples), 0.0);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t n = 0; n < n_fft; ++n) {
      const int64_t m = t * hop + n - pad;
      if (m >= 0 && m < num_samples)
        env[static_cast<size_t>(m)] += win[static_cast<size_t>(n)] * win[static_cast<size_t>(n)];
    }
  for (double e : env) TFC_CHECK(e > 1e-8, "istft: degenerate overlap-add envelope");
  return env;
}

// Shared inverse kernel: (frames, bins) double spectra -> num_samples doubles.
void istft_channel(const double* re, const double* im, int64_t frames,
                   int64_t bins, const std::vector<double>& win, int hop,
                   int64_t num_samples, const std::vector<double>& env,
                   std::vector<double>& out) {
  const int64_t n_fft = static_cast<int64_t>(win.size());
  const int64_t pad = n_fft / 2;
  out.assign(static_cast<size_t>(num_samples), 0.0);
  std::vector<std::complex<double>> spec(static_cast<size_t>(bins));
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t k = 0; k < bins; ++k)
      spec[static_cast<size_t>(k)] = {re[t * bins + k], im[t * bins + k]};
    std::vector<double> frame = fft::irfft(spec, n_fft);
    for (int64_t n = 0; n < n_fft; ++n) {
      const int64_t m = t * hop + n - pad;
      if (m >= 0 && m < num_samples)
        out[static_cast<size_t>(m)] += win[static_cast<size_t>(n)] * frame[static_cast<size_t>(n)];
    }
  }
  for (int64_t m = 0; m < num_samples; ++m) out[static_cast<size_t>(m)] /= env[static_cast<size_t>(m)];
}

}  // namespace

std::vector<double> sqrt_hann(int n_fft) {
  std::vector<double> w(static_cast<size_t>(n_fft));
  for (int n = 0; n < n_fft; ++n)
    w[static_cast<size_t>(n)] = std::sin(std::numbers::pi * n / n_fft);
  return w;
}

int64_t stft_frames(int64_t num_samples, int hop) {
  TFC_CHECK(num_samples >= 1, "stft: empty signal");
  return num_samples / hop + 1;
}

ComplexSpectrogram stft(const Waveform& w, int n_fft, int hop) {
  check_params(n_fft, hop);
  TFC_CHECK(w.samples.defined() && w.samples.rank() == 2,
            "stft: samples must be (channels, num_samples)");
  const int64_t M = w.channels(), N = w.num_samples();
  const int64_t T = stft_frames(N, hop);
  const int64_t F = n_fft / 2 + 1;
  const int64_t pad = n_fft / 2;
  const std::vector<double> win = sqrt_hann(n_fft);

  ComplexSpectrogram s;
  s.re = Tensor({M, T, F}, w.samples.dtype());
  s.im = Tensor({M, T, F}, w.samples.dtype());
  s.n_fft = n_fft;
  s.hop = hop;
  s.sample_rate = w.sample_rate;
  s.num_samples = N;

  std::vector<double> frame(static_cast<size_t>(n_fft));
  for (int64_t m = 0; m < M; ++m)
    for (int64_t t = 0; t < T; ++t) {
      for (int64_t n = 0; n < n_fft; ++n) {
        const int64_t src = t * hop + n - pad;
        const double x = (src >= 0 && src < N) ? w.samples.at(m * N + src) : 0.0;
        frame[static_cast<size_t>(n)] = x * win[static_cast<size_t>(n)];
      }
      auto spec = fft::rfft(frame);
      for (int64_t k = 0; k < F; ++k) {
        s.re.set((m * T + t) * F + k, spec[static_cast<size_t>(k)].real());
        s.im.set((m * T + t) * F + k, spec[static_cast<size_t>(k)].imag());
      }
    }
  return s;
}

Waveform istft(const ComplexSpectrogram& s) {
  check_params(s.n_fft, s.hop);
  TFC_CHECK(s.window == "sqrt_hann", "istft: unknown window '" << s.window << "'");
  TFC_CHECK(s.re.defined() && s.im.defined() && s.re.shape() == s.im.shape() &&
                s.re.rank() == 3,
            "istft: re/im must be matching (channels, frames, bins)");
  const int64_t M = s.channels(), T = s.frames(), F = s.bins();
  TFC_CHECK(F == s.n_fft / 2 + 1, "istft: bin count " << F << " does not match n_fft "
                                                      << s.n_fft);
  const int64_t N = s.num_samples;
  TFC_CHECK(N >= 1 && T >= stft_frames(N, s.hop),
            "istft: frame count " << T << " cannot cover " << N << " samples");
  const std::vector<double> win = sqrt_hann(s.n_fft);
  const std::vector<double> env = ola_envelope(win, s.hop, N, T);

  Waveform w;
  w.sample_rate = s.sample_rate;
  w.samples = Tensor({M, N}, s.re.dtype());

  std::vector<double> re(static_cast<size_t>(T * F)), im(static_cast<size_t>(T * F)), out;
  for (int64_t m = 0; m < M; ++m) {
    for (int64_t i = 0; i < T * F; ++i) {
      re[static_cast<size_t>(i)] = s.re.at(m * T * F + i);
      im[static_cast<size_t>(i)] = s.im.at(m * T * F + i);
    }
    istft_channel(re.data(), im.data(), T, F, win, s.hop, N, env, out);
    for (int64_t n = 0; n < N; ++n) w.samples.set(m * N + n, out[static_cast<size_t>(n)]);
  }
  return w;
}

ad::Var istft_var(const ad::Var& re, const ad::Var& im, int n_fft, int hop,
                  int64_t num_samples) {
  check_params(n_fft, hop);
  TFC_CHECK(re->value.shape() == im->value.shape() && re->value.rank() == 3,
            "istft_var: re/im must be matching (channels, frames, bins)");
  TFC_CHECK(re->value.dtype() == im->value.dtype(), "istft_var: dtype mismatch");
  const int64_t M = re->value.extent(0), T = re->value.extent(1), F = re->value.extent(2);
  TFC_CHECK(F == n_fft / 2 + 1, "istft_var: bin count mismatch");
  TFC_CHECK(num_samples >= 1 && T >= stft_frames(num_samples, hop),
            "istft_var: frame count cannot cover the signal");

  const std::vector<double> win = sqrt_hann(n_fft);
  const std::vector<double> env = ola_envelope(win, hop, num_samples, T);

  Tensor out({M, num_samples}, re->value.dtype());
  {
    std::vector<double> cre(static_cast<size_t>(T * F)), cim(static_cast<size_t>(T * F)), o;
    for (int64_t m = 0; m < M; ++m) {
      for (int64_t i = 0; i < T * F; ++i) {
        cre[static_cast<size_t>(i)] = re->value.at(m * T * F + i);
        cim[static_cast<size_t>(i)] = im->value.at(m * T * F + i);
      }
      istft_channel(cre.data(), cim.data(), T, F, win, hop, num_samples, env, o);
      for (int64_t n = 0; n < num_samples; ++n)
        out.set(m * num_samples + n, o[static_cast<size_t>(n)]);
    }
  }

  const int64_t N = num_samples;
  const int64_t pad = n_fft / 2;
  auto bw = [M, T, F, N, n_fft, hop, pad, win, env](ad::Node& nd) {
    const ad::Var& vre = nd.parents[0];
    const ad::Var& vim = nd.parents[1];
    const Dtype dt = vre->value.dtype();
    if (vre->requires_grad && !vre->grad.defined()) vre->grad = Tensor(vre->value.shape(), dt);
    if (vim->requires_grad && !vim->grad.defined()) vim->grad = Tensor(vim->value.shape(), dt);
    std::vector<double> gw(static_cast<size_t>(n_fft));
    for (int64_t m = 0; m < M; ++m)
      for (int64_t t = 0; t < T; ++t) {
        for (int64_t n = 0; n < n_fft; ++n) {
          const int64_t s = t * hop + n - pad;
          gw[static_cast<size_t>(n)] =
              (s >= 0 && s < N)
                  ? nd.grad.at(m * N + s) / env[static_cast<size_t>(s)] * win[static_cast<size_t>(n)]
                  : 0.0;
        }
        auto spec = fft::rfft(gw);
        for (int64_t k = 0; k < F; ++k) {
          const double ck = (k == 0 || k == n_fft / 2) ? 1.0 : 2.0;
          const double sc = ck / static_cast<double>(n_fft);
          const int64_t idx = (m * T + t) * F + k;
          if (vre->requires_grad)
            vre->grad.set(idx, vre->grad.at(idx) + sc * spec[static_cast<size_t>(k)].real());
          if (vim->requires_grad)
            vim->grad.set(idx, vim->grad.at(idx) + sc * spec[static_cast<size_t>(k)].imag());
        }
      }
  };
  return ad::custom(std::move(out), {re, im}, bw, "istft");
}

}  // namespace tfcorr
