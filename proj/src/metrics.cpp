#include "tfcorr/metrics.hpp"

#include <cmath>

#include "tfcorr/loss.hpp"

namespace tfcorr {

namespace {

constexpr double kCapDb = 60.0;

double ratio_db(double signal, double error) {
  if (signal <= 0.0) return -kCapDb;
  if (error <= 0.0) return kCapDb;
  const double db = 10.0 * std::log10(signal / error);
  return std::min(std::max(db, -kCapDb), kCapDb);
}

void check_pair(std::span<const float> est, std::span<const float> ref) {
  TFC_CHECK(est.size() == ref.size(), "metrics: length mismatch: " << est.size()
                                                                   << " vs " << ref.size());
  TFC_CHECK(!ref.empty(), "metrics: empty reference");
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace

double sdr(std::span<const float> est, std::span<const float> ref) {
  check_pair(est, ref);
  const double s = dot(ref, ref);
  TFC_CHECK(s > 0.0, "metrics: all-zero reference");
  double e = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - est[i];
    e += d * d;
  }
  return ratio_db(s, e);
}

double si_sdr(std::span<const float> est, std::span<const float> ref) {
  check_pair(est, ref);
  const double rr = dot(ref, ref);
  TFC_CHECK(rr > 0.0, "metrics: all-zero reference");
  const double alpha = dot(est, ref) / rr;
  const double s = alpha * alpha * rr;
  double e = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(est[i]) - alpha * ref[i];
    e += d * d;
  }
  return ratio_db(s, e);
}

MetricReport score_separation(const std::vector<std::vector<float>>& est,
                              const std::vector<std::vector<float>>& ref,
                              const std::vector<float>& mixture) {
  const size_t k = est.size();
  TFC_CHECK(k >= 1 && ref.size() == k,
            "metrics: need matching stream counts, got " << est.size() << " vs "
                                                         << ref.size());

  // negated SDR as assignment cost -> maximizes mean SDR
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j) cost[i][j] = -sdr(est[i], ref[j]);
  auto [perm, neg_total] = best_assignment(cost);

  MetricReport rep;
  rep.permutation = perm;
  rep.sdr = -neg_total / static_cast<double>(k);
  double si = 0.0, mix = 0.0;
  for (size_t i = 0; i < k; ++i) {
    const auto& target = ref[static_cast<size_t>(perm[i])];
    si += si_sdr(est[i], target);
    mix += sdr(mixture, target);
  }
  rep.si_sdr = si / static_cast<double>(k);
  rep.sdr_mix = mix / static_cast<double>(k);
  rep.sdri = rep.sdr - rep.sdr_mix;
  return rep;
}

}  // namespace tfcorr
