#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "testutil.hpp"
#include "tfcorr/costs.hpp"
#include "tfcorr/metrics.hpp"
#include "tfcorr/model.hpp"

using namespace tfcorr;
using namespace tfct;

namespace {

std::vector<float> randf(size_t n, std::mt19937_64& rng, float amp = 1.0f) {
  std::uniform_real_distribution<float> dist(-amp, amp);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

ModelConfig micro_cfg() {
  ModelConfig cfg;
  cfg.sample_rate = 8000;
  cfg.n_fft = 16;
  cfg.hop = 8;
  cfg.mics = 2;
  cfg.sources = 2;
  cfg.C = 4;
  cfg.C_prime = 2;
  cfg.F_prime = 4;
  cfg.R = 1;
  cfg.heads = 1;
  cfg.dconv_kernel = 3;
  cfg.downsample = 2;
  return cfg;
}

}  // namespace

TEST_CASE("metrics: caps, scale behavior, and crafted ratios") {
  std::mt19937_64 rng(3);
  auto ref = randf(4000, rng);
  CHECK(sdr(ref, ref) == 60.0);
  CHECK(si_sdr(ref, ref) == 60.0);

  auto half = ref;
  for (auto& v : half) v *= 0.5f;
  CHECK(si_sdr(half, ref) == 60.0);
  // Halving the estimate leaves an error of 0.5*ref, so the energy ratio is 4.
  CHECK(sdr(half, ref) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));

  for (double snr : {3.0, 10.0, 20.0}) {
    auto noise = randf(ref.size(), rng);
    double re = 0, ne = 0;
    for (size_t i = 0; i < ref.size(); ++i) {
      re += static_cast<double>(ref[i]) * ref[i];
      ne += static_cast<double>(noise[i]) * noise[i];
    }
    const double g = std::sqrt(re / (ne * std::pow(10.0, snr / 10.0)));
    auto est = ref;
    for (size_t i = 0; i < ref.size(); ++i)
      est[i] += static_cast<float>(g * noise[i]);
    CHECK(std::fabs(sdr(est, ref) - snr) < 0.01);
  }

  std::vector<float> zeros(100, 0.0f);
  auto some = randf(100, rng);
  CHECK(std::fabs(sdr(zeros, some)) < 1e-9);
  CHECK(si_sdr(zeros, some) == -60.0);
  try {
    sdr(some, zeros);
    FAIL("expected a throw for a zero reference");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("zero reference") != std::string::npos);
  }
}

TEST_CASE("metrics: separation report finds the pairing and zeroes the baseline") {
  std::mt19937_64 rng(7);
  auto r0 = randf(2000, rng), r1 = randf(2000, rng);
  std::vector<float> mix(2000);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = r0[i] + r1[i];

  MetricReport swapped = score_separation({r1, r0}, {r0, r1}, mix);
  CHECK(swapped.permutation == std::vector<int>{1, 0});
  CHECK(swapped.sdr == 60.0);
  CHECK(swapped.si_sdr == 60.0);
  CHECK(swapped.sdri == 60.0 - swapped.sdr_mix);
  CHECK(swapped.sdr_mix < 10.0);

  // the mixture used as every estimate defines the SDRi zero point
  MetricReport base = score_separation({mix, mix}, {r0, r1}, mix);
  CHECK(base.sdri == 0.0);

  // permutation invariance of the scores
  MetricReport a = score_separation({r1, r0}, {r0, r1}, mix);
  MetricReport b = score_separation({r1, r0}, {r1, r0}, mix);
  CHECK(a.sdr == b.sdr);
  CHECK(a.si_sdr == b.si_sdr);
  CHECK(a.sdri == b.sdri);
}

TEST_CASE("costs: parameter totals match the live registration") {
  std::vector<ModelConfig> cfgs;
  cfgs.push_back(ModelConfig{});  // published setup
  cfgs.push_back(micro_cfg());
  {
    ModelConfig c = micro_cfg();
    c.input_mode = "raw";
    c.output_mode = "mapping";
    c.head_mode = "mimo";
    cfgs.push_back(c);
  }
  {
    ModelConfig c = micro_cfg();
    c.beta_mode = "fixed";
    c.beta_init = 1.0;
    c.taps_L = 0;
    cfgs.push_back(c);
  }
  {
    ModelConfig c = micro_cfg();
    c.input_mode = "magipd";
    c.mics = 3;
    cfgs.push_back(c);
  }
  for (size_t i = 0; i < cfgs.size(); ++i) {
    CAPTURE(i);
    nn::ParamStore ps(1, Dtype::F32);
    TfCorrNet net(cfgs[i], ps);
    CHECK(count_costs(cfgs[i]).total_params == ps.total_params());
  }
}

TEST_CASE("costs: affine in depth, superlinear in width") {
  auto at = [&](int r, int64_t c) {
    ModelConfig cfg = micro_cfg();
    cfg.R = r;
    cfg.C = c;
    return count_costs(cfg);
  };
  const auto r1 = at(1, 4), r2 = at(2, 4), r3 = at(3, 4);
  CHECK(r2.total_params - r1.total_params == r3.total_params - r2.total_params);
  const double d1 = r2.total_macs_per_s - r1.total_macs_per_s;
  const double d2 = r3.total_macs_per_s - r2.total_macs_per_s;
  CHECK(std::fabs(d1 - d2) <= 1e-9 * d1);

  const auto narrow = at(1, 8), wide = at(1, 16);
  const double pr = static_cast<double>(wide.total_params) / narrow.total_params;
  const double mr = wide.total_macs_per_s / narrow.total_macs_per_s;
  CHECK(pr > 1.5);
  CHECK(mr > 1.5);
  CHECK(pr < 5.0);
  CHECK(mr < 5.0);
}

TEST_CASE("costs: published configuration lands inside the reported envelope") {
  ModelConfig cfg;   // M=7, K=2, C=96, C'=16, F'=96, R=4, heads=4, kernel=65
  cfg.hop = 128;     // throughput preset used for cost accounting
  CostReport rep = count_costs(cfg);
  CHECK(std::fabs(static_cast<double>(rep.total_params) - 5.1e6) / 5.1e6 < 0.15);
  CHECK(std::fabs(rep.total_macs_per_s - 44.5e9) / 44.5e9 < 0.25);

  // the breakdown accounts for every unit exactly once
  int64_t params = 0;
  double macs = 0;
  for (const auto& line : rep.lines) {
    params += line.params;
    macs += line.macs_per_s;
  }
  CHECK(params == rep.total_params);
  CHECK(macs == doctest::Approx(rep.total_macs_per_s).epsilon(1e-12));
}
