#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "tfcorr/fft.hpp"
#include "tfcorr/stft.hpp"
#include "tfcorr/wav.hpp"

using namespace tfcorr;
using namespace tfct;

namespace {

// brute-force DFT used as the independent oracle
std::vector<std::complex<double>> dft_direct(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

Waveform random_wave(int64_t channels, int64_t n, Dtype dt, std::mt19937_64& rng,
                     int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples = rand_tensor({channels, n}, dt, rng);
  return w;
}

}  // namespace

TEST_CASE("rfft matches the direct DFT oracle") {
  std::mt19937_64 rng(31);
  for (int64_t n : {8, 64, 256}) {
    std::vector<double> x(static_cast<size_t>(n));
    std::uniform_real_distribution<double> dist(-1, 1);
    for (auto& v : x) v = dist(rng);
    auto fast = fft::rfft(x);
    auto slow = dft_direct(x);
    REQUIRE(fast.size() == slow.size());
    for (size_t k = 0; k < fast.size(); ++k) {
      CHECK(fast[k].real() == doctest::Approx(slow[k].real()).epsilon(1e-9).scale(1.0));
      CHECK(fast[k].imag() == doctest::Approx(slow[k].imag()).epsilon(1e-9).scale(1.0));
    }
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS(fft::fft_inplace(bad, false));
}

TEST_CASE("fft of known signals") {
  // delta -> flat spectrum
  std::vector<double> delta(16, 0.0);
  delta[0] = 1.0;
  auto d = fft::rfft(delta);
  for (const auto& b : d) {
    CHECK(b.real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.imag() == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  }
  // cosine at bin 3 -> n/2 at bin 3
  const int64_t n = 32;
  std::vector<double> c(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    c[static_cast<size_t>(i)] = std::cos(2.0 * std::numbers::pi * 3.0 * i / n);
  auto spec = fft::rfft(c);
  for (size_t k = 0; k < spec.size(); ++k) {
    const double want = (k == 3) ? n / 2.0 : 0.0;
    CHECK(std::abs(spec[k] - std::complex<double>(want, 0.0)) < 1e-9);
  }
}

TEST_CASE("irfft inverts rfft") {
  std::mt19937_64 rng(32);
  std::vector<double> x(128);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& v : x) v = dist(rng);
  auto back = fft::irfft(fft::rfft(x), 128);
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("wav float32 round trip is exact") {
  std::mt19937_64 rng(33);
  wav::WavData w;
  w.sample_rate = 16000;
  w.channels = 3;
  w.samples.resize(3 * 100);
  std::uniform_real_distribution<float> dist(-1, 1);
  for (auto& s : w.samples) s = dist(rng);

  const char* path = "tfc_test_f32.wav";
  wav::write_wav(path, w, true);
  wav::WavData r = wav::read_wav(path);
  std::remove(path);
  CHECK(r.sample_rate == 16000);
  CHECK(r.channels == 3);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) CHECK(r.samples[i] == w.samples[i]);
}

TEST_CASE("wav pcm16 round trip is within quantization") {
  std::mt19937_64 rng(34);
  wav::WavData w;
  w.sample_rate = 8000;
  w.channels = 2;
  w.samples.resize(2 * 64);
  std::uniform_real_distribution<float> dist(-0.9f, 0.9f);
  for (auto& s : w.samples) s = dist(rng);

  const char* path = "tfc_test_i16.wav";
  wav::write_wav(path, w, false);
  wav::WavData r = wav::read_wav(path);
  std::remove(path);
  REQUIRE(r.samples.size() == w.samples.size());
  // scale-by-32767 write plus divide-by-32768 read bounds the error by 1.5 lsb
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::fabs(r.samples[i] - w.samples[i]) <= 1.5f / 32768.0f);
}

TEST_CASE("wav reader rejects malformed files") {
  const char* path = "tfc_test_bad.wav";
  {
    FILE* f = std::fopen(path, "wb");
    std::fputs("RIFXjunkjunkjunkjunk", f);
    std::fclose(f);
  }
  CHECK_THROWS(wav::read_wav(path));
  std::remove(path);
  CHECK_THROWS(wav::read_wav("does_not_exist.wav"));
}

TEST_CASE("stft produces the documented frame count and bin count") {
  std::mt19937_64 rng(35);
  Waveform w = random_wave(2, 1000, Dtype::F32, rng);
  auto s = stft(w, 256, 128);
  CHECK(s.re.shape() == Shape{2, 1000 / 128 + 1, 129});
  CHECK(s.im.shape() == s.re.shape());
  CHECK(s.num_samples == 1000);
  CHECK(s.re.dtype() == Dtype::F32);
  CHECK_THROWS(stft(w, 250, 125));    // not a power of two
  CHECK_THROWS(stft(w, 256, 200));    // hop > n_fft/2
}

TEST_CASE("stft/istft round trip in f32 stays under 1e-6") {
  std::mt19937_64 rng(36);
  for (int64_t n : {100, 1000, 12345, 16000}) {
    Waveform w = random_wave(2, n, Dtype::F32, rng);
    for (int hop : {128, 64}) {
      Waveform back = istft(stft(w, 256, hop));
      REQUIRE(back.samples.shape() == w.samples.shape());
      double worst = 0;
      for (int64_t i = 0; i < w.samples.numel(); ++i)
        worst = std::max(worst, std::fabs(back.samples.at(i) - w.samples.at(i)));
      INFO("n=" << n << " hop=" << hop);
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("stft/istft round trip in f64 stays under 1e-12") {
  std::mt19937_64 rng(37);
  Waveform w = random_wave(1, 5000, Dtype::F64, rng);
  Waveform back = istft(stft(w, 512, 256));
  double worst = 0;
  for (int64_t i = 0; i < w.samples.numel(); ++i)
    worst = std::max(worst, std::fabs(back.samples.at(i) - w.samples.at(i)));
  CHECK(worst < 1e-12);
}

TEST_CASE("analysis window sidelobes beyond two bins are below -30 dB") {
  const int n = 512;
  auto w = sqrt_hann(n);
  auto spec = fft::rfft(w);
  const double main_lobe = std::abs(spec[0]);
  for (int k = 3; k <= 16; ++k) {
    const double db = 20.0 * std::log10(std::abs(spec[static_cast<size_t>(k)]) / main_lobe);
    INFO("offset " << k);
    CHECK(db < -30.0);
  }
}

TEST_CASE("istft_var forward equals istft") {
  std::mt19937_64 rng(38);
  Waveform w = random_wave(2, 700, Dtype::F32, rng);
  auto s = stft(w, 128, 64);
  Waveform direct = istft(s);
  auto out = istft_var(ad::constant(s.re), ad::constant(s.im), 128, 64, 700);
  REQUIRE(out->value.shape() == Shape{2, 700});
  for (int64_t i = 0; i < direct.samples.numel(); ++i)
    CHECK(out->value.at(i) == direct.samples.at(i));
}

TEST_CASE("istft_var gradient matches finite differences") {
  std::mt19937_64 rng(39);
  const int64_t T = stft_frames(13, 4);
  Tensor re = rand_tensor({1, T, 5}, Dtype::F64, rng);
  Tensor im = rand_tensor({1, T, 5}, Dtype::F64, rng);
  const double err = gradcheck(
      [&](const std::vector<ad::Var>& ps) {
        return weighted_sum(istft_var(ps[0], ps[1], 8, 4, 13));
      },
      {re, im});
  CHECK(err < 1e-4);
}

TEST_CASE("istft_var composed over stft reproduces the waveform") {
  std::mt19937_64 rng(40);
  Waveform w = random_wave(1, 333, Dtype::F64, rng);
  auto s = stft(w, 64, 32);
  auto out = istft_var(ad::param(s.re), ad::param(s.im), 64, 32, 333);
  for (int64_t i = 0; i < w.samples.numel(); ++i)
    CHECK(out->value.at(i) == doctest::Approx(w.samples.at(i)).epsilon(1e-10).scale(1.0));
}
