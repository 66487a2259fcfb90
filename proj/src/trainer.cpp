#include "tfcorr/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "tfcorr/checkpoint.hpp"
#include "tfcorr/css.hpp"
#include "tfcorr/stft.hpp"

namespace tfcorr {

namespace {

void check_example(const LoadedExample& ex, const ModelConfig& cfg,
                   int64_t sources) {
  TFC_CHECK(ex.mixture.channels() == cfg.mics,
            "trainer: example has " << ex.mixture.channels()
                                    << " channels, the model wants "
                                    << cfg.mics);
  TFC_CHECK(ex.mixture.sample_rate == cfg.sample_rate,
            "trainer: example sample rate " << ex.mixture.sample_rate
                                            << " != model rate "
                                            << cfg.sample_rate);
  TFC_CHECK(static_cast<int64_t>(ex.targets.size()) == sources,
            "trainer: example carries " << ex.targets.size()
                                        << " targets, expected " << sources);
}

// (channels, len) crop scaled by gain, rows chosen by `rows` (all when empty).
Waveform crop_rows(const Waveform& w, int64_t start, int64_t len, double gain,
                   const std::vector<int64_t>& rows) {
  const int64_t n = w.num_samples();
  TFC_CHECK(start >= 0 && start + len <= n, "trainer: crop out of range");
  std::vector<int64_t> take = rows;
  if (take.empty()) {
    take.resize(static_cast<size_t>(w.channels()));
    for (size_t i = 0; i < take.size(); ++i) take[i] = static_cast<int64_t>(i);
  }
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples =
      Tensor::zeros({static_cast<int64_t>(take.size()), len}, Dtype::F32);
  auto src = w.samples.data<float>();
  auto dst = out.samples.data<float>();
  for (size_t r = 0; r < take.size(); ++r)
    for (int64_t i = 0; i < len; ++i)
      dst[r * static_cast<size_t>(len) + static_cast<size_t>(i)] =
          static_cast<float>(src[static_cast<size_t>(take[r] * n + start + i)] *
                             gain);
  return out;
}

double rms_of_row0(const Waveform& w, int64_t start, int64_t len) {
  auto d = w.samples.data<float>();
  double acc = 0.0;
  for (int64_t i = 0; i < len; ++i) {
    const double v = d[static_cast<size_t>(start + i)];
    acc += v * v;
  }
  return std::sqrt(acc / static_cast<double>(std::max<int64_t>(len, 1)));
}

std::vector<float> row_of(const Waveform& w, int64_t r) {
  auto d = w.samples.data<float>();
  const int64_t n = w.num_samples();
  return std::vector<float>(d.begin() + r * n, d.begin() + (r + 1) * n);
}

}  // namespace

Trainer::Trainer(TfCorrNet& model, nn::ParamStore& ps,
                 const TrainerOptions& opt)
    : Trainer(model, ps, opt, nullptr) {}

Trainer::Trainer(TfCorrNet& model, nn::ParamStore& ps,
                 const TrainerOptions& opt, const TfCorrNet* stage1)
    : model_(model),
      ps_(ps),
      options_(opt),
      stage1_(stage1),
      opt_(ps, AdamWConfig{opt.lr, 0.9, 0.999, 1e-8, 1e-2}),
      rng_(opt.seed) {
  TFC_CHECK(options_.steps >= 0 && options_.batch >= 1,
            "trainer: steps must be >= 0 and batch >= 1");
  TFC_CHECK(options_.crop_s > 0, "trainer: crop_s must be positive");
  if (stage1_) {
    const ModelConfig& a = stage1_->config();
    const ModelConfig& b = model_.config();
    TFC_CHECK(a.head_mode == "mimo",
              "trainer: the frozen first stage must be mimo");
    TFC_CHECK(b.mics == a.mics + 1 && b.sources == 1 &&
                  b.out_channels() == 1,
              "trainer: the enhancement model must be single-source miso on "
              "one extra channel");
    TFC_CHECK(a.sample_rate == b.sample_rate && a.n_fft == b.n_fft &&
                  a.hop == b.hop,
              "trainer: both stages must share one STFT grid");
  }
}

PitOutcome Trainer::example_loss(const LoadedExample& ex, int64_t crop_start,
                                 int64_t crop_len) {
  const ModelConfig& front =
      stage1_ ? stage1_->config() : model_.config();
  const int64_t sources = front.sources;
  check_example(ex, front, sources);

  const double rms = rms_of_row0(ex.mixture, crop_start, crop_len);
  const double gain = rms > 1e-6 ? 1.0 / rms : 1.0;

  const Waveform mix = crop_rows(ex.mixture, crop_start, crop_len, gain, {});
  ComplexSpectrogram spec = stft(mix, front.n_fft, front.hop);
  const int64_t frames = spec.frames(), bins = spec.bins();

  // reference spectra/waveforms: all mics for a mimo head, mic 0 otherwise
  const bool mimo_target = !stage1_ && front.out_channels() > 1;
  const std::vector<int64_t> rows =
      mimo_target ? std::vector<int64_t>{} : std::vector<int64_t>{0};
  const int64_t out_ch = mimo_target ? front.mics : 1;

  Tensor ref_re = Tensor::zeros({sources, out_ch, frames, bins}, Dtype::F32);
  Tensor ref_im = Tensor::zeros({sources, out_ch, frames, bins}, Dtype::F32);
  Tensor ref_td = Tensor::zeros({sources, out_ch, crop_len}, Dtype::F32);
  const int64_t plane = out_ch * frames * bins;
  for (int64_t k = 0; k < sources; ++k) {
    const Waveform tgt =
        crop_rows(ex.targets[static_cast<size_t>(k)], crop_start, crop_len,
                  gain, rows);
    ComplexSpectrogram ts = stft(tgt, front.n_fft, front.hop);
    std::copy(ts.re.data<float>().begin(), ts.re.data<float>().end(),
              ref_re.data<float>().begin() + k * plane);
    std::copy(ts.im.data<float>().begin(), ts.im.data<float>().end(),
              ref_im.data<float>().begin() + k * plane);
    std::copy(tgt.samples.data<float>().begin(),
              tgt.samples.data<float>().end(),
              ref_td.data<float>().begin() + k * out_ch * crop_len);
  }

  SpectraSet est;
  if (!stage1_) {
    est = model_.forward(ad::constant(spec.re), ad::constant(spec.im));
  } else {
    SpectraSet raw =
        stage1_->forward(ad::constant(spec.re), ad::constant(spec.im));
    // values only: the first stage stays frozen
    SourcePlanes bf =
        mwf_beamformer(spec.re, spec.im, raw.re->value, raw.im->value);
    const int64_t mics = front.mics;
    std::vector<ad::Var> outs_re, outs_im;
    for (int64_t k = 0; k < sources; ++k) {
      Tensor in_re = Tensor::zeros({mics + 1, frames, bins}, Dtype::F32);
      Tensor in_im = Tensor::zeros({mics + 1, frames, bins}, Dtype::F32);
      std::copy(spec.re.data<float>().begin(), spec.re.data<float>().end(),
                in_re.data<float>().begin());
      std::copy(spec.im.data<float>().begin(), spec.im.data<float>().end(),
                in_im.data<float>().begin());
      std::copy(bf.re.data<float>().begin() + k * frames * bins,
                bf.re.data<float>().begin() + (k + 1) * frames * bins,
                in_re.data<float>().begin() + mics * frames * bins);
      std::copy(bf.im.data<float>().begin() + k * frames * bins,
                bf.im.data<float>().begin() + (k + 1) * frames * bins,
                in_im.data<float>().begin() + mics * frames * bins);
      SpectraSet y =
          model_.forward(ad::constant(in_re), ad::constant(in_im));
      outs_re.push_back(y.re);
      outs_im.push_back(y.im);
    }
    est.re = ad::concat(outs_re, 0);
    est.im = ad::concat(outs_im, 0);
  }

  ad::Var est_wav = istft_var(
      ad::reshape(est.re, {sources * out_ch, frames, bins}),
      ad::reshape(est.im, {sources * out_ch, frames, bins}), front.n_fft,
      front.hop, crop_len);
  est_wav = ad::reshape(est_wav, {sources, out_ch, crop_len});

  SpectraSet ref{ad::constant(ref_re), ad::constant(ref_im)};
  return pit_loss(est, ref, est_wav, ad::constant(ref_td));
}

std::vector<StepStats> Trainer::run(const std::vector<LoadedExample>& train,
                                    const std::vector<LoadedExample>& valid) {
  TFC_CHECK(!train.empty(), "trainer: no training examples");
  const ModelConfig& front = stage1_ ? stage1_->config() : model_.config();
  const int64_t crop_n =
      llround(options_.crop_s * front.sample_rate);

  LrSchedule sched(options_.lr);
  std::vector<StepStats> stats;
  stats.reserve(static_cast<size_t>(options_.steps));

  for (int step = 1; step <= options_.steps; ++step) {
    ad::Var total;
    StepStats s;
    s.step = step;
    for (int b = 0; b < options_.batch; ++b) {
      const size_t idx = static_cast<size_t>(rng_() % train.size());
      const LoadedExample& ex = train[idx];
      const int64_t n = ex.mixture.num_samples();
      const int64_t len = std::min(crop_n, n);
      const int64_t start =
          static_cast<int64_t>(rng_() % static_cast<uint64_t>(n - len + 1));
      PitOutcome item = example_loss(ex, start, len);
      total = total ? ad::add(total, item.total) : item.total;
      s.total += item.report.total;
      s.l_tf += item.report.l_tf;
      s.l_wav += item.report.l_wav;
      s.l_mc += item.report.l_mc;
    }
    const double inv = 1.0 / options_.batch;
    ad::backward(ad::scale(total, inv));
    s.total *= inv;
    s.l_tf *= inv;
    s.l_wav *= inv;
    s.l_mc *= inv;
    s.lr = opt_.config().lr;
    opt_.step();
    stats.push_back(s);

    if (options_.eval_every > 0 && !valid.empty() &&
        step % options_.eval_every == 0)
      opt_.config().lr = sched.observe(validation_loss(valid));
  }

  if (!options_.save_path.empty()) {
    Checkpoint ck = snapshot(ps_, &opt_, options_.config_block);
    save_checkpoint(options_.save_path, ck);
  }
  return stats;
}

double Trainer::validation_loss(const std::vector<LoadedExample>& valid) {
  TFC_CHECK(!valid.empty(), "trainer: no validation examples");
  const ModelConfig& front = stage1_ ? stage1_->config() : model_.config();
  const int64_t crop_n =
      llround(options_.crop_s * front.sample_rate);
  double acc = 0.0;
  for (const LoadedExample& ex : valid) {
    const int64_t n = ex.mixture.num_samples();
    const int64_t len = std::min(crop_n, n);
    const int64_t start = (n - len) / 2;
    acc += example_loss(ex, start, len).report.total;
  }
  return acc / static_cast<double>(valid.size());
}

DatasetScore evaluate_dataset(const TfCorrNet& model,
                              const std::vector<LoadedExample>& examples,
                              bool css, const TfCorrNet* enhance) {
  TFC_CHECK(!examples.empty(), "evaluate: no examples");
  DatasetScore score;
  for (const LoadedExample& ex : examples) {
    SeparatedStreams out =
        css ? separate_css(model, ex.mixture, {}, nullptr, enhance)
            : separate_once(model, ex.mixture, enhance);
    std::vector<std::vector<float>> refs;
    refs.reserve(ex.targets.size());
    for (const Waveform& t : ex.targets) refs.push_back(row_of(t, 0));
    MetricReport r = score_separation(out.streams, refs, row_of(ex.mixture, 0));
    score.mean_sdr += r.sdr;
    score.mean_si_sdr += r.si_sdr;
    score.mean_sdri += r.sdri;
    score.per_example.push_back(std::move(r));
  }
  const double inv = 1.0 / static_cast<double>(examples.size());
  score.mean_sdr *= inv;
  score.mean_si_sdr *= inv;
  score.mean_sdri *= inv;
  return score;
}

}  // namespace tfcorr
