#include "tfcorr/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace tfcorr {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    fail("config: key '" + key + "' needs an integer, got '" + v + "'");
  }
  TFC_CHECK(used == v.size(),
            "config: trailing junk in integer for key '" << key << "': '" << v
                                                         << "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    fail("config: key '" + key + "' needs a number, got '" + v + "'");
  }
  TFC_CHECK(used == v.size(),
            "config: trailing junk in number for key '" << key << "': '" << v
                                                        << "'");
  return out;
}

void apply_key(RunConfig& cfg, const std::string& key,
               const std::string& value) {
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  if (key == "sample_rate")
    m.sample_rate = static_cast<int>(parse_int(key, value));
  else if (key == "n_fft")
    m.n_fft = static_cast<int>(parse_int(key, value));
  else if (key == "hop")
    m.hop = static_cast<int>(parse_int(key, value));
  else if (key == "mics")
    m.mics = static_cast<int>(parse_int(key, value));
  else if (key == "sources")
    m.sources = static_cast<int>(parse_int(key, value));
  else if (key == "C")
    m.C = parse_int(key, value);
  else if (key == "C_prime")
    m.C_prime = parse_int(key, value);
  else if (key == "F_prime")
    m.F_prime = parse_int(key, value);
  else if (key == "R")
    m.R = static_cast<int>(parse_int(key, value));
  else if (key == "heads")
    m.heads = static_cast<int>(parse_int(key, value));
  else if (key == "dconv_kernel")
    m.dconv_kernel = static_cast<int>(parse_int(key, value));
  else if (key == "downsample")
    m.downsample = static_cast<int>(parse_int(key, value));
  else if (key == "taps_L")
    m.taps_L = static_cast<int>(parse_int(key, value));
  else if (key == "head_mode")
    m.head_mode = value;
  else if (key == "input_mode")
    m.input_mode = value;
  else if (key == "output_mode")
    m.output_mode = value;
  else if (key == "beta_init")
    m.beta_init = parse_real(key, value);
  else if (key == "beta_mode")
    m.beta_mode = value;
  else if (key == "lr")
    t.lr = parse_real(key, value);
  else if (key == "batch")
    t.batch = static_cast<int>(parse_int(key, value));
  else if (key == "steps")
    t.steps = static_cast<int>(parse_int(key, value));
  else if (key == "seed")
    t.seed = static_cast<uint64_t>(parse_int(key, value));
  else
    fail("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig desk_config() {
  RunConfig cfg;
  ModelConfig& m = cfg.model;
  m.sample_rate = 8000;
  m.n_fft = 128;
  m.hop = 64;
  m.mics = 2;
  m.sources = 2;
  m.C = 16;
  m.C_prime = 8;
  m.F_prime = 32;
  m.R = 2;
  m.heads = 2;
  m.dconv_kernel = 17;
  m.downsample = 4;
  cfg.train.lr = 1e-3;
  cfg.train.batch = 2;
  cfg.train.steps = 600;
  return cfg;
}

RunConfig full_config() {
  RunConfig cfg;  // the ModelConfig defaults are the full-size topology
  cfg.model.hop = 128;
  cfg.train.lr = 1e-4;
  cfg.train.batch = 2;
  cfg.train.steps = 2000;
  return cfg;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    TFC_CHECK(eq != std::string::npos,
              "config: line " << lineno << " is not a key=value pair: '"
                              << line << "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    TFC_CHECK(!key.empty(), "config: empty key on line " << lineno);
    apply_key(base, key, value);
  }
  base.model.validate();
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  TFC_CHECK(in.good(), "config: cannot open '" << path << "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

std::map<std::string, std::string> config_to_map(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  std::map<std::string, std::string> kv;
  kv["sample_rate"] = std::to_string(m.sample_rate);
  kv["n_fft"] = std::to_string(m.n_fft);
  kv["hop"] = std::to_string(m.hop);
  kv["mics"] = std::to_string(m.mics);
  kv["sources"] = std::to_string(m.sources);
  kv["C"] = std::to_string(m.C);
  kv["C_prime"] = std::to_string(m.C_prime);
  kv["F_prime"] = std::to_string(m.F_prime);
  kv["R"] = std::to_string(m.R);
  kv["heads"] = std::to_string(m.heads);
  kv["dconv_kernel"] = std::to_string(m.dconv_kernel);
  kv["downsample"] = std::to_string(m.downsample);
  kv["taps_L"] = std::to_string(m.taps_L);
  kv["head_mode"] = m.head_mode;
  kv["input_mode"] = m.input_mode;
  kv["output_mode"] = m.output_mode;
  {
    std::ostringstream oss;
    oss << std::setprecision(17) << m.beta_init;
    kv["beta_init"] = oss.str();
  }
  kv["beta_mode"] = m.beta_mode;
  {
    std::ostringstream oss;
    oss << std::setprecision(17) << cfg.train.lr;
    kv["lr"] = oss.str();
  }
  kv["batch"] = std::to_string(cfg.train.batch);
  kv["steps"] = std::to_string(cfg.train.steps);
  kv["seed"] = std::to_string(cfg.train.seed);
  return kv;
}

RunConfig config_from_map(const std::map<std::string, std::string>& kv,
                          RunConfig base) {
  for (const auto& [key, value] : kv) {
    if (key == "step") continue;  // checkpoint bookkeeping
    apply_key(base, key, value);
  }
  base.model.validate();
  return base;
}

}  // namespace tfcorr
