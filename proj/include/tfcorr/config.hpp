#pragma once

#include <map>
#include <string>

#include "tfcorr/model.hpp"

namespace tfcorr {

// Run-level knobs that sit outside the network topology.
struct TrainConfig {
  double lr = 1e-4;
  int batch = 2;
  int steps = 200;
  uint64_t seed = 1;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Small everyday preset: 8 kHz, two mics, two sources.
RunConfig desk_config();

// Full-size topology: 16 kHz, seven mics, C = 96, R = 4, with the STFT hop
// pinned to 128 samples (75% overlap).
RunConfig full_config();

// key=value lines, one per line; '#' starts a comment and blank lines are
// skipped. Unknown keys and malformed numbers throw. Values override the
// given baseline.
RunConfig parse_config_text(const std::string& text, RunConfig base);
RunConfig load_config_file(const std::string& path, RunConfig base);

// The same keys as strings, e.g. for embedding into checkpoints.
std::map<std::string, std::string> config_to_map(const RunConfig& cfg);

// Inverse of config_to_map. Ignores bookkeeping keys (currently "step") so a
// checkpoint's config block round-trips. Unknown keys still throw.
RunConfig config_from_map(const std::map<std::string, std::string>& kv,
                          RunConfig base);

}  // namespace tfcorr
