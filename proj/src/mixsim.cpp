#include "tfcorr/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "tfcorr/fft.hpp"
#include "tfcorr/wav.hpp"

namespace tfcorr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSincTaps = 32;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double sinc(double t) {
  if (std::fabs(t) < 1e-12) return 1.0;
  return std::sin(kPi * t) / (kPi * t);
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Linear convolution through zero-padded FFTs; exact up to double rounding.
std::vector<float> fft_convolve(const std::vector<float>& x,
                                const std::vector<float>& h, int64_t out_len) {
  const int64_t full = static_cast<int64_t>(x.size() + h.size()) - 1;
  int64_t n = 1;
  while (n < full) n <<= 1;
  std::vector<double> xd(static_cast<size_t>(n), 0.0), hd(static_cast<size_t>(n), 0.0);
  std::copy(x.begin(), x.end(), xd.begin());
  std::copy(h.begin(), h.end(), hd.begin());
  auto xf = fft::rfft(xd);
  auto hf = fft::rfft(hd);
  for (size_t i = 0; i < xf.size(); ++i) xf[i] *= hf[i];
  auto y = fft::irfft(xf, n);
  std::vector<float> out(static_cast<size_t>(out_len), 0.0f);
  const int64_t copy = std::min<int64_t>(out_len, full);
  for (int64_t i = 0; i < copy; ++i) out[static_cast<size_t>(i)] = static_cast<float>(y[static_cast<size_t>(i)]);
  return out;
}

// 10 ms raised-cosine fades so placed utterances start and stop cleanly.
void apply_fades(std::vector<float>& seg, int sample_rate) {
  const int64_t n = static_cast<int64_t>(seg.size());
  const int64_t f = std::min<int64_t>(n / 2, sample_rate / 100);
  for (int64_t i = 0; i < f; ++i) {
    const float g = static_cast<float>(0.5 * (1.0 - std::cos(kPi * (i + 1) / (f + 1))));
    seg[static_cast<size_t>(i)] *= g;
    seg[static_cast<size_t>(n - 1 - i)] *= g;
  }
}

double energy(const Tensor& t) {
  double e = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double v = t.at(i);
    e += v * v;
  }
  return e;
}

}  // namespace

RoomScene sample_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  TFC_CHECK(cfg.mics >= 1 && cfg.sources >= 1, "scene: need mics and sources");
  RoomScene scene;
  scene.speed_of_sound = cfg.speed_of_sound;
  for (int m = 0; m < cfg.mics; ++m) {
    const double x = (m - 0.5 * (cfg.mics - 1)) * cfg.mic_spacing;
    scene.mic_pos.push_back({x, 0.0, 0.0});
  }
  // keep sources angularly separated so spatial cues stay informative
  std::vector<double> angles;
  const double min_sep = kPi / 9.0;  // 20 degrees
  for (int k = 0; k < cfg.sources; ++k) {
    double theta = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      theta = uniform(rng, 0.0, 2.0 * kPi);
      bool ok = true;
      for (double a : angles) {
        double d = std::fabs(std::remainder(theta - a, 2.0 * kPi));
        if (d < min_sep) ok = false;
      }
      if (ok) break;
    }
    angles.push_back(theta);
    const double r = uniform(rng, cfg.src_dist_min, cfg.src_dist_max);
    scene.src_pos.push_back({r * std::cos(theta), r * std::sin(theta), 0.0});
  }
  scene.t60 = uniform(rng, cfg.t60_min, cfg.t60_max);
  scene.snr_db = uniform(rng, cfg.snr_min, cfg.snr_max);
  scene.overlap = uniform(rng, cfg.overlap_min, cfg.overlap_max);
  return scene;
}

Rir synth_rir(const RoomScene& scene, const SceneConfig& cfg, int source, int mic,
              std::mt19937_64& rng) {
  TFC_CHECK(source >= 0 && source < static_cast<int>(scene.src_pos.size()),
            "synth_rir: bad source index " << source);
  TFC_CHECK(mic >= 0 && mic < static_cast<int>(scene.mic_pos.size()),
            "synth_rir: bad mic index " << mic);
  const double r = dist3(scene.src_pos[static_cast<size_t>(source)],
                         scene.mic_pos[static_cast<size_t>(mic)]);
  const double fs = cfg.sample_rate;
  Rir rir;
  rir.delay_samples = r / scene.speed_of_sound * fs;
  rir.attenuation = 1.0 / std::max(r, 0.1);

  const int64_t center = static_cast<int64_t>(std::llround(rir.delay_samples));
  const int64_t i0 = std::max<int64_t>(0, center - kSincTaps / 2);
  const int64_t direct_len = center + kSincTaps / 2 + 1;
  rir.direct.assign(static_cast<size_t>(direct_len), 0.0f);
  for (int64_t i = i0; i < direct_len; ++i) {
    const double t = static_cast<double>(i) - rir.delay_samples;
    if (std::fabs(t) > kSincTaps / 2.0) continue;
    const double w = 0.5 * (1.0 + std::cos(kPi * t / (kSincTaps / 2.0)));
    rir.direct[static_cast<size_t>(i)] =
        static_cast<float>(rir.attenuation * sinc(t) * w);
  }

  rir.full = rir.direct;
  if (scene.t60 > 0.0) {
    const int64_t tail_start = static_cast<int64_t>(std::floor(rir.delay_samples)) + 1;
    const int64_t tail_len = static_cast<int64_t>(std::ceil(scene.t60 * fs));
    rir.full.resize(static_cast<size_t>(std::max<int64_t>(direct_len, tail_start + tail_len)), 0.0f);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int64_t i = 0; i < tail_len; ++i) {
      const double t = static_cast<double>(tail_start + i) - rir.delay_samples;
      const double env = std::pow(10.0, -3.0 * t / (scene.t60 * fs));
      rir.full[static_cast<size_t>(tail_start + i)] +=
          static_cast<float>(rir.attenuation * cfg.tail_level * gauss(rng) * env);
    }
  }
  return rir;
}

MixtureExample make_mixture(const SceneConfig& cfg, const RoomScene& scene,
                            const std::vector<std::vector<float>>& dry,
                            uint64_t seed) {
  const int K = cfg.sources, M = cfg.mics;
  TFC_CHECK(static_cast<int>(dry.size()) == K,
            "make_mixture: need " << K << " dry sources, got " << dry.size());
  const int64_t W = cfg.num_samples();
  const int64_t active = std::min<int64_t>(
      W, static_cast<int64_t>(std::llround(W * (0.5 + scene.overlap / 2.0))));
  for (const auto& d : dry)
    TFC_CHECK(static_cast<int64_t>(d.size()) >= active,
              "make_mixture: dry source shorter than placement window ("
                  << d.size() << " < " << active << ")");

  std::mt19937_64 rng(seed);
  MixtureExample ex;
  ex.scene = scene;
  ex.seed = seed;

  // place each utterance; endpoints spread so adjacent spans overlap
  std::vector<std::vector<float>> placed(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    std::vector<float> seg(dry[static_cast<size_t>(k)].begin(),
                           dry[static_cast<size_t>(k)].begin() + active);
    apply_fades(seg, cfg.sample_rate);
    const int64_t start =
        K == 1 ? 0 : (W - active) * k / (K - 1);
    auto& line = placed[static_cast<size_t>(k)];
    line.assign(static_cast<size_t>(W), 0.0f);
    std::copy(seg.begin(), seg.end(), line.begin() + start);
  }

  // render per-source images (reverberant) and targets (direct path only)
  for (int k = 0; k < K; ++k) {
    Waveform img{cfg.sample_rate, Tensor({M, W}, Dtype::F32)};
    Waveform tgt{cfg.sample_rate, Tensor({M, W}, Dtype::F32)};
    auto pi = img.samples.data<float>();
    auto pt = tgt.samples.data<float>();
    for (int m = 0; m < M; ++m) {
      Rir rir = synth_rir(scene, cfg, k, m, rng);
      auto full = fft_convolve(placed[static_cast<size_t>(k)], rir.full, W);
      auto direct = fft_convolve(placed[static_cast<size_t>(k)], rir.direct, W);
      std::copy(full.begin(), full.end(), pi.begin() + m * W);
      std::copy(direct.begin(), direct.end(), pt.begin() + m * W);
    }
    ex.images.push_back(std::move(img));
    ex.targets.push_back(std::move(tgt));
  }

  // colored noise, exactly scaled: snr = 10 log10(sum-of-images energy / noise energy)
  double sig_energy = 0.0;
  for (const auto& img : ex.images) sig_energy += energy(img.samples);
  TFC_CHECK(sig_energy > 0.0, "make_mixture: silent scene");
  ex.noise = Waveform{cfg.sample_rate, Tensor({M, W}, Dtype::F32)};
  auto pn = ex.noise.samples.data<float>();
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double alpha = uniform(rng, 0.6, 0.95);
  double noise_energy = 0.0;
  for (int m = 0; m < M; ++m) {
    double y = 0.0;
    for (int64_t n = 0; n < W; ++n) {
      y = alpha * y + (1.0 - alpha) * gauss(rng);
      pn[m * W + n] = static_cast<float>(y);
      noise_energy += y * y;
    }
  }
  // 200 dB and beyond means "noiseless": zero exactly instead of leaving
  // denormal-sized residue behind
  const double scale =
      scene.snr_db >= 200.0
          ? 0.0
          : std::sqrt(sig_energy / (noise_energy * std::pow(10.0, scene.snr_db / 10.0)));
  for (int64_t i = 0; i < ex.noise.samples.numel(); ++i)
    pn[i] = static_cast<float>(pn[i] * scale);

  // float32 accumulation in fixed order keeps the consistency bit-exact
  ex.mixture = Waveform{cfg.sample_rate, Tensor({M, W}, Dtype::F32)};
  auto pm = ex.mixture.samples.data<float>();
  for (int64_t i = 0; i < ex.mixture.samples.numel(); ++i) {
    float acc = 0.0f;
    for (const auto& img : ex.images)
      acc += const_cast<Tensor&>(img.samples).data<float>()[i];
    pm[i] = acc + pn[i];
  }
  return ex;
}

std::vector<float> speechlike(int sample_rate, int64_t num_samples,
                              std::mt19937_64& rng) {
  TFC_CHECK(sample_rate > 0 && num_samples > 0, "speechlike: bad size request");
  const double fs = sample_rate;
  double f0 = uniform(rng, 85.0, 255.0);
  const int harmonics = 10;

  struct Bump {
    double center, width, gain;
  };
  std::vector<Bump> formants;
  const double top = std::min(3000.0, 0.4 * fs);
  for (int b = 0; b < 3; ++b)
    formants.push_back({uniform(rng, 300.0, top), uniform(rng, 150.0, 400.0),
                        uniform(rng, 0.5, 1.5)});
  auto envelope = [&](double f) {
    if (f > 0.45 * fs) return 0.0;
    double e = 0.08;
    for (const auto& b : formants) {
      const double z = (f - b.center) / b.width;
      e += b.gain * std::exp(-0.5 * z * z);
    }
    return e;
  };

  const double am_rate = uniform(rng, 2.0, 5.0);
  const double am_phase = uniform(rng, 0.0, 2.0 * kPi);
  std::vector<double> hphase(harmonics);
  for (auto& p : hphase) p = uniform(rng, 0.0, 2.0 * kPi);

  std::normal_distribution<double> walk(0.0, 0.003);
  std::vector<float> out(static_cast<size_t>(num_samples));
  double phase = 0.0, rms = 0.0;
  for (int64_t n = 0; n < num_samples; ++n) {
    f0 = std::clamp(f0 * std::exp(walk(rng)), 70.0, 300.0);
    phase += 2.0 * kPi * f0 / fs;
    const double t = static_cast<double>(n) / fs;
    const double am =
        0.35 + 0.65 * std::pow(0.5 * (1.0 + std::sin(2.0 * kPi * am_rate * t + am_phase)), 1.5);
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h)
      s += envelope(h * f0) / h * std::sin(h * phase + hphase[static_cast<size_t>(h - 1)]);
    const double v = am * s;
    out[static_cast<size_t>(n)] = static_cast<float>(v);
    rms += v * v;
  }
  rms = std::sqrt(rms / static_cast<double>(num_samples));
  const float g = static_cast<float>(rms > 0.0 ? 0.1 / rms : 1.0);
  for (auto& v : out) v *= g;
  return out;
}

std::vector<ManifestEntry> generate_dataset(const std::string& dir,
                                            const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  TFC_CHECK(manifest.good(), "dataset: cannot write " << manifest_path);

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < spec.count; ++i) {
    // splitmix-style per-example seed: independent of count, stable per index
    uint64_t s = spec.seed + 0x9E3779B97F4A7C15ull * static_cast<uint64_t>(i + 1);
    s ^= s >> 30;
    s *= 0xBF58476D1CE4E5B9ull;
    s ^= s >> 27;
    std::mt19937_64 rng(s);

    RoomScene scene = sample_scene(spec.scene, rng);
    std::vector<std::vector<float>> dry;
    for (int k = 0; k < spec.scene.sources; ++k)
      dry.push_back(speechlike(spec.scene.sample_rate, spec.scene.num_samples(), rng));
    // decorrelate from the scene/source draws, which already consumed `s`
    MixtureExample ex = make_mixture(spec.scene, scene, dry, s ^ 0xD1B54A32D192ED03ull);

    char base[32];
    std::snprintf(base, sizeof(base), "ex%04d", i);
    ManifestEntry entry;
    entry.mixture = std::string(base) + ".mix.wav";
    entry.noise = std::string(base) + ".noise.wav";
    entry.duration_s = spec.scene.duration_s;
    entry.seed = s;
    wav::write_wav((fs::path(dir) / entry.mixture).string(), to_wavdata(ex.mixture));
    wav::write_wav((fs::path(dir) / entry.noise).string(), to_wavdata(ex.noise));
    for (int k = 0; k < spec.scene.sources; ++k) {
      std::string t = std::string(base) + ".s" + std::to_string(k) + ".wav";
      wav::write_wav((fs::path(dir) / t).string(),
                     to_wavdata(ex.targets[static_cast<size_t>(k)]));
      entry.targets.push_back(std::move(t));
    }

    nlohmann::json j{{"mixture", entry.mixture},
                     {"targets", entry.targets},
                     {"noise", entry.noise},
                     {"duration_s", entry.duration_s},
                     {"seed", entry.seed},
                     {"snr_db", scene.snr_db},
                     {"t60", scene.t60},
                     {"overlap", scene.overlap}};
    manifest << j.dump() << "\n";
    entries.push_back(std::move(entry));
  }
  TFC_CHECK(manifest.good(), "dataset: write failed for " << manifest_path);
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  TFC_CHECK(is.good(), "manifest: cannot open " << path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.mixture = j.at("mixture").get<std::string>();
      e.targets = j.at("targets").get<std::vector<std::string>>();
      e.noise = j.value("noise", std::string());
      e.duration_s = j.value("duration_s", 0.0);
      e.seed = j.value("seed", uint64_t{0});
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& err) {
      fail("manifest: bad line " + std::to_string(lineno) + " in " + path + ": " +
           err.what());
    }
  }
  return entries;
}

LoadedExample load_example(const std::string& manifest_dir,
                           const ManifestEntry& entry) {
  namespace fs = std::filesystem;
  LoadedExample ex;
  ex.mixture = from_wavdata(wav::read_wav((fs::path(manifest_dir) / entry.mixture).string()));
  for (const auto& t : entry.targets)
    ex.targets.push_back(from_wavdata(wav::read_wav((fs::path(manifest_dir) / t).string())));
  return ex;
}

}  // namespace tfcorr
