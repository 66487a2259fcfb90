// Command-line surface: dataset simulation, training (both stages),
// separation (single pass or sliding-window), evaluation, and inspection.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tfcorr/checkpoint.hpp"
#include "tfcorr/config.hpp"
#include "tfcorr/costs.hpp"
#include "tfcorr/css.hpp"
#include "tfcorr/mixsim.hpp"
#include "tfcorr/trainer.hpp"
#include "tfcorr/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tfcorr;

namespace {

Waveform planar(const wav::WavData& w) {
  const int C = w.channels;
  const int64_t N = w.frames();
  Waveform out{w.sample_rate, Tensor({C, N}, Dtype::F32)};
  auto p = out.samples.data<float>();
  for (int c = 0; c < C; ++c)
    for (int64_t n = 0; n < N; ++n) p[c * N + n] = w.samples[n * C + c];
  return out;
}

wav::WavData mono(int sample_rate, const std::vector<float>& x) {
  wav::WavData w;
  w.sample_rate = sample_rate;
  w.channels = 1;
  w.samples = x;
  return w;
}

// A restored checkpoint: the store must outlive the model that registered in it.
struct LoadedModel {
  Checkpoint ck;
  RunConfig cfg;
  std::unique_ptr<nn::ParamStore> ps;
  std::unique_ptr<TfCorrNet> model;
};

LoadedModel load_model(const std::string& path, const RunConfig& base) {
  LoadedModel lm;
  lm.ck = load_checkpoint(path);
  lm.cfg = config_from_map(lm.ck.config, base);
  lm.ps = std::make_unique<nn::ParamStore>(lm.cfg.train.seed);
  lm.model = std::make_unique<TfCorrNet>(lm.cfg.model, *lm.ps);
  restore(lm.ck, *lm.ps);
  return lm;
}

std::vector<LoadedExample> load_dataset(const std::string& dir) {
  auto entries = read_manifest(dir + "/manifest.jsonl");
  std::vector<LoadedExample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(load_example(dir, e));
  return out;
}

RunConfig preset_of(const std::string& name) {
  return name == "full" ? full_config() : desk_config();
}

int cmd_simulate(const DatasetSpec& spec, const std::string& out_dir) {
  auto entries = generate_dataset(out_dir, spec);
  std::printf("wrote %zu examples (%d mics, %d sources, %.1f s at %d Hz) to %s\n",
              entries.size(), spec.scene.mics, spec.scene.sources,
              spec.scene.duration_s, spec.scene.sample_rate, out_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data_dir,
              const std::string& valid_dir, const std::string& out_path,
              const std::string& stage1_path, double crop_s, int eval_every) {
  auto train = load_dataset(data_dir);
  std::vector<LoadedExample> valid;
  if (!valid_dir.empty()) valid = load_dataset(valid_dir);
  std::printf("loaded %zu training / %zu validation examples\n", train.size(),
              valid.size());

  std::unique_ptr<LoadedModel> stage1;
  RunConfig mc = rc;
  if (!stage1_path.empty()) {
    stage1 = std::make_unique<LoadedModel>(load_model(stage1_path, desk_config()));
    mc.model = stage1->cfg.model;
    mc.model.mics = stage1->cfg.model.mics + 1;
    mc.model.sources = 1;
    mc.model.head_mode = "miso";
    std::printf("second stage: enhancing %d-mic checkpoint %s\n",
                stage1->cfg.model.mics, stage1_path.c_str());
  }

  nn::ParamStore ps(mc.train.seed);
  TfCorrNet model(mc.model, ps);
  std::printf("model: %lld parameters\n",
              static_cast<long long>(count_costs(mc.model).total_params));

  TrainerOptions opt;
  opt.steps = mc.train.steps;
  opt.batch = mc.train.batch;
  opt.lr = mc.train.lr;
  opt.seed = mc.train.seed;
  opt.crop_s = crop_s;
  opt.eval_every = eval_every;
  opt.save_path = out_path;
  opt.config_block = config_to_map(mc);

  auto t0 = std::chrono::steady_clock::now();
  std::vector<StepStats> stats;
  if (stage1) {
    Trainer tr(model, ps, opt, stage1->model.get());
    stats = tr.run(train, valid);
  } else {
    Trainer tr(model, ps, opt);
    stats = tr.run(train, valid);
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const size_t stride = std::max<size_t>(1, stats.size() / 10);
  for (size_t i = 0; i < stats.size(); i += stride)
    std::printf("step %5d  loss %8.4f  (tf %.4f  wav %.4f  mc %.4f)  lr %.2e\n",
                stats[i].step, stats[i].total, stats[i].l_tf, stats[i].l_wav,
                stats[i].l_mc, stats[i].lr);
  if (!stats.empty())
    std::printf("final: step %d loss %.4f (%.1f s, %.2f s/step)\n",
                stats.back().step, stats.back().total, secs,
                secs / static_cast<double>(stats.size()));
  std::printf("saved checkpoint to %s\n", out_path.c_str());
  return 0;
}

int cmd_separate(const std::string& model_path, const std::string& enhance_path,
                 const std::string& input, const std::string& out_dir,
                 const std::string& mode, const std::string& log_path) {
  LoadedModel lm = load_model(model_path, desk_config());
  std::unique_ptr<LoadedModel> en;
  if (!enhance_path.empty())
    en = std::make_unique<LoadedModel>(load_model(enhance_path, desk_config()));

  Waveform mix = planar(wav::read_wav(input));
  if (mix.samples.shape()[0] != lm.cfg.model.mics)
    throw std::runtime_error("input has " +
                             std::to_string(mix.samples.shape()[0]) +
                             " channels but the model expects " +
                             std::to_string(lm.cfg.model.mics));

  std::vector<ChunkLogEntry> log;
  SeparatedStreams out =
      mode == "css"
          ? separate_css(*lm.model, mix, {}, &log, en ? en->model.get() : nullptr)
          : separate_once(*lm.model, mix, en ? en->model.get() : nullptr);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(input).stem().string();
  for (size_t k = 0; k < out.streams.size(); ++k) {
    std::string path = (fs::path(out_dir) / (stem + ".s" + std::to_string(k + 1) + ".wav")).string();
    wav::write_wav(path, mono(out.sample_rate, out.streams[k]));
    std::printf("stream %zu -> %s\n", k + 1, path.c_str());
  }
  if (!log_path.empty()) {
    std::ofstream f(log_path);
    if (!f) throw std::runtime_error("cannot write " + log_path);
    for (const auto& e : log) {
      json j{{"chunk", e.index},
             {"start", e.start},
             {"assignment", e.assignment},
             {"seconds", e.seconds}};
      f << j.dump() << "\n";
    }
    std::printf("chunk log (%zu windows) -> %s\n", log.size(), log_path.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& enhance_path,
                 const std::string& data_dir, const std::string& mode,
                 const std::string& json_path) {
  LoadedModel lm = load_model(model_path, desk_config());
  std::unique_ptr<LoadedModel> en;
  if (!enhance_path.empty())
    en = std::make_unique<LoadedModel>(load_model(enhance_path, desk_config()));

  auto entries = read_manifest(data_dir + "/manifest.jsonl");
  std::vector<LoadedExample> examples;
  examples.reserve(entries.size());
  for (const auto& e : entries) examples.push_back(load_example(data_dir, e));

  DatasetScore score = evaluate_dataset(*lm.model, examples, mode == "css",
                                        en ? en->model.get() : nullptr);

  json j;
  j["mode"] = mode;
  j["model"] = model_path;
  j["count"] = examples.size();
  j["mean"] = {{"sdr", score.mean_sdr},
               {"sdri", score.mean_sdri},
               {"si_sdr", score.mean_si_sdr}};
  j["examples"] = json::array();
  for (size_t i = 0; i < score.per_example.size(); ++i) {
    const MetricReport& r = score.per_example[i];
    j["examples"].push_back({{"index", i},
                             {"mixture", entries[i].mixture},
                             {"sdr", r.sdr},
                             {"sdr_mix", r.sdr_mix},
                             {"sdri", r.sdri},
                             {"si_sdr", r.si_sdr},
                             {"permutation", r.permutation}});
  }
  if (!json_path.empty()) {
    std::ofstream f(json_path);
    if (!f) throw std::runtime_error("cannot write " + json_path);
    f << j.dump(2) << "\n";
    std::printf("report -> %s\n", json_path.c_str());
  }
  std::printf("%zu examples (%s): SDRi %.3f dB, SDR %.3f dB, SI-SDR %.3f dB\n",
              examples.size(), mode.c_str(), score.mean_sdri, score.mean_sdr,
              score.mean_si_sdr);
  return 0;
}

int cmd_inspect(const std::string& model_path, bool costs,
                const std::string& preset, const std::string& config_path) {
  RunConfig rc = preset_of(preset);
  if (!model_path.empty()) {
    Checkpoint ck = load_checkpoint(model_path);
    rc = config_from_map(ck.config, rc);
    int64_t param_tensors = 0, param_elems = 0, moments = 0;
    for (const auto& [name, t] : ck.entries) {
      if (name.rfind("adam.", 0) == 0) {
        ++moments;
      } else {
        ++param_tensors;
        param_elems += t.numel();
      }
    }
    std::printf("checkpoint: %s\n", model_path.c_str());
    std::printf("tensors: %lld parameters (%lld elements)%s\n",
                static_cast<long long>(param_tensors),
                static_cast<long long>(param_elems),
                moments ? ", optimizer moments present" : "");
    std::printf("config:\n");
    for (const auto& [k, v] : ck.config) std::printf("  %s = %s\n", k.c_str(), v.c_str());
  }
  if (!config_path.empty()) rc = load_config_file(config_path, rc);
  if (costs) {
    CostReport cr = count_costs(rc.model);
    std::printf("%-28s %12s %14s\n", "module", "params", "MACs/s");
    for (const auto& line : cr.lines)
      std::printf("%-28s %12lld %14.3e\n", line.name.c_str(),
                  static_cast<long long>(line.params), line.macs_per_s);
    std::printf("%-28s %12lld %14.3e\n", "total",
                static_cast<long long>(cr.total_params), cr.total_macs_per_s);
    std::printf("= %.3f M params, %.2f G MACs/s\n", cr.total_params / 1e6,
                cr.total_macs_per_s / 1e9);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tfcorrnet: multi-channel continuous speech separation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset (WAVs + manifest.jsonl)");
  DatasetSpec spec;
  std::string sim_out;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--count", spec.count, "number of examples");
  sim->add_option("--seed", spec.seed, "dataset seed");
  sim->add_option("--sample-rate", spec.scene.sample_rate, "sample rate (Hz)");
  sim->add_option("--mics", spec.scene.mics, "microphones");
  sim->add_option("--sources", spec.scene.sources, "speakers per mixture");
  sim->add_option("--duration", spec.scene.duration_s, "clip length (s)");
  sim->add_option("--t60-min", spec.scene.t60_min, "reverberation range (s)");
  sim->add_option("--t60-max", spec.scene.t60_max, "reverberation range (s)");
  sim->add_option("--snr-min", spec.scene.snr_min, "noise SNR range (dB)");
  sim->add_option("--snr-max", spec.scene.snr_max, "noise SNR range (dB)");
  sim->add_option("--overlap-min", spec.scene.overlap_min, "speaker overlap range (0..1)");
  sim->add_option("--overlap-max", spec.scene.overlap_max, "speaker overlap range (0..1)");

  // train
  auto* trn = app.add_subcommand("train", "Train a separation model (or a second stage with --stage1)");
  std::string trn_data, trn_valid, trn_out, trn_stage1, trn_preset = "desk", trn_config;
  int trn_steps = -1, trn_batch = -1, trn_eval_every = 100;
  double trn_lr = -1.0, trn_crop = 0.8;
  uint64_t trn_seed = 0;
  trn->add_option("--data", trn_data, "training dataset directory")->required();
  trn->add_option("--valid", trn_valid, "validation dataset directory");
  trn->add_option("--out", trn_out, "checkpoint output path")->required();
  trn->add_option("--stage1", trn_stage1, "first-stage checkpoint (trains the enhancement stage)");
  trn->add_option("--preset", trn_preset, "base configuration")->check(CLI::IsMember({"desk", "full"}));
  trn->add_option("--config", trn_config, "key=value config file")->check(CLI::ExistingFile);
  trn->add_option("--steps", trn_steps, "optimizer steps");
  trn->add_option("--batch", trn_batch, "batch size");
  trn->add_option("--lr", trn_lr, "learning rate");
  trn->add_option("--seed", trn_seed, "training seed");
  trn->add_option("--crop", trn_crop, "training crop length (s)");
  trn->add_option("--eval-every", trn_eval_every, "validation cadence (steps)");

  // separate
  auto* sep = app.add_subcommand("separate", "Separate a multi-channel WAV into per-speaker streams");
  std::string sep_model, sep_enhance, sep_in, sep_outdir = ".", sep_mode = "once", sep_log;
  sep->add_option("--model", sep_model, "model checkpoint")->required();
  sep->add_option("--enhance", sep_enhance, "second-stage checkpoint");
  sep->add_option("--input", sep_in, "input WAV")->required();
  sep->add_option("--out-dir", sep_outdir, "output directory");
  sep->add_option("--mode", sep_mode, "once: whole file, css: sliding window")
      ->check(CLI::IsMember({"once", "css"}));
  sep->add_option("--log", sep_log, "JSON-lines chunk log (css mode)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a model on a dataset and emit a JSON report");
  std::string ev_model, ev_enhance, ev_data, ev_mode = "once", ev_json;
  ev->add_option("--model", ev_model, "model checkpoint")->required();
  ev->add_option("--enhance", ev_enhance, "second-stage checkpoint");
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--mode", ev_mode, "once or css")->check(CLI::IsMember({"once", "css"}));
  ev->add_option("--json", ev_json, "write the full report here");

  // inspect
  auto* ins = app.add_subcommand("inspect", "Describe a checkpoint or a configuration's cost");
  std::string ins_model, ins_preset = "desk", ins_config;
  bool ins_costs = false;
  ins->add_option("--model", ins_model, "checkpoint to describe");
  ins->add_flag("--costs", ins_costs, "print the analytic parameter/MAC table");
  ins->add_option("--preset", ins_preset, "base configuration for --costs")
      ->check(CLI::IsMember({"desk", "full"}));
  ins->add_option("--config", ins_config, "key=value config file for --costs")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(spec, sim_out);
    if (*trn) {
      RunConfig rc = preset_of(trn_preset);
      if (!trn_stage1.empty())
        rc = config_from_map(load_checkpoint(trn_stage1).config, rc);
      if (!trn_config.empty()) rc = load_config_file(trn_config, rc);
      if (trn_steps >= 0) rc.train.steps = trn_steps;
      if (trn_batch > 0) rc.train.batch = trn_batch;
      if (trn_lr > 0) rc.train.lr = trn_lr;
      if (trn->count("--seed")) rc.train.seed = trn_seed;
      return cmd_train(rc, trn_data, trn_valid, trn_out, trn_stage1, trn_crop,
                       trn_eval_every);
    }
    if (*sep) {
      if (!sep_log.empty() && sep_mode != "css")
        throw std::runtime_error("--log requires --mode css");
      return cmd_separate(sep_model, sep_enhance, sep_in, sep_outdir, sep_mode, sep_log);
    }
    if (*ev) return cmd_evaluate(ev_model, ev_enhance, ev_data, ev_mode, ev_json);
    if (*ins) {
      if (ins_model.empty() && !ins_costs)
        throw std::runtime_error("inspect needs --model and/or --costs");
      return cmd_inspect(ins_model, ins_costs, ins_preset, ins_config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
