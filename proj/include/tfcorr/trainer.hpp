#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "tfcorr/loss.hpp"
#include "tfcorr/metrics.hpp"
#include "tfcorr/mixsim.hpp"
#include "tfcorr/model.hpp"
#include "tfcorr/optim.hpp"

namespace tfcorr {

struct TrainerOptions {
  int steps = 400;
  int batch = 2;
  double lr = 1e-3;
  uint64_t seed = 1;
  double crop_s = 0.8;  // length of the random training crops
  int eval_every = 50;  // validation cadence in steps; 0 disables
  std::string save_path;  // checkpoint written after the last step; "" skips
  // written into the checkpoint's config block verbatim
  std::map<std::string, std::string> config_block;
};

struct StepStats {
  int step = 0;
  double total = 0.0, l_tf = 0.0, l_wav = 0.0, l_mc = 0.0;
  double lr = 0.0;
};

// Deterministic single-thread training loop: random example + crop draws
// from one seeded generator, reference-mic RMS normalization, STFT, forward,
// permutation-invariant loss on spectra and time renderings, AdamW update,
// periodic validation driving the lr schedule.
class Trainer {
 public:
  // First stage: model separates the raw mixture.
  Trainer(TfCorrNet& model, nn::ParamStore& ps, const TrainerOptions& opt);

  // Second stage: stage1 (frozen, mimo) feeds the Wiener beamformer whose
  // per-source output is stacked with the mixture for the single-source
  // enhancement model under training.
  Trainer(TfCorrNet& model, nn::ParamStore& ps, const TrainerOptions& opt,
          const TfCorrNet* stage1);

  std::vector<StepStats> run(const std::vector<LoadedExample>& train,
                             const std::vector<LoadedExample>& valid);

  // Mean loss over deterministic center crops of the given examples.
  double validation_loss(const std::vector<LoadedExample>& valid);

  AdamW& optimizer() { return opt_; }

 private:
  PitOutcome example_loss(const LoadedExample& ex, int64_t crop_start,
                          int64_t crop_len);

  TfCorrNet& model_;
  nn::ParamStore& ps_;
  TrainerOptions options_;
  const TfCorrNet* stage1_ = nullptr;
  AdamW opt_;
  std::mt19937_64 rng_;
};

struct DatasetScore {
  double mean_sdr = 0.0, mean_sdri = 0.0, mean_si_sdr = 0.0;
  std::vector<MetricReport> per_example;
};

// Separates every example (single pass, or chunk-wise when css) and scores
// it against the reference-mic direct-path targets.
DatasetScore evaluate_dataset(const TfCorrNet& model,
                              const std::vector<LoadedExample>& examples,
                              bool css = false,
                              const TfCorrNet* enhance = nullptr);

}  // namespace tfcorr
