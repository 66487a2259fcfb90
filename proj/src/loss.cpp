#include "tfcorr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tfcorr {

namespace {

ad::Var magnitude(const ad::Var& re, const ad::Var& im, double eps) {
  return ad::sqrt_(
      ad::clamp_min(ad::add(ad::mul(re, re), ad::mul(im, im)), eps * eps));
}

ad::Var mean_abs(const ad::Var& d) { return ad::reduce_mean_all(ad::abs_(d)); }

void check_same_shape(const ad::Var& a, const ad::Var& b, const char* who) {
  TFC_CHECK(a && b, who << ": undefined operand");
  TFC_CHECK(a->value.shape() == b->value.shape(),
            who << ": shape mismatch " << shape_str(a->value.shape()) << " vs "
                << shape_str(b->value.shape()));
}

}  // namespace

ad::Var loss_tf_pair(const ad::Var& yre, const ad::Var& yim, const ad::Var& sre,
                     const ad::Var& sim, double eps) {
  check_same_shape(yre, sre, "loss_tf");
  check_same_shape(yim, sim, "loss_tf");
  check_same_shape(yre, yim, "loss_tf");
  ad::Var mag = mean_abs(ad::sub(magnitude(yre, yim, eps), magnitude(sre, sim, eps)));
  return ad::add(ad::add(mag, mean_abs(ad::sub(yre, sre))),
                 mean_abs(ad::sub(yim, sim)));
}

ad::Var loss_wav_pair(const ad::Var& y, const ad::Var& s) {
  check_same_shape(y, s, "loss_wav");
  return mean_abs(ad::sub(y, s));
}

ad::Var loss_mc(const ad::Var& y, const ad::Var& s) {
  check_same_shape(y, s, "loss_mc");
  TFC_CHECK(y->value.rank() >= 2, "loss_mc: need (K, ...) stacks, got "
                                      << shape_str(y->value.shape()));
  return mean_abs(ad::sub(ad::reduce_sum(y, 0, false), ad::reduce_sum(s, 0, false)));
}

std::pair<std::vector<int>, double> best_assignment(
    const std::vector<std::vector<double>>& cost) {
  const size_t k = cost.size();
  TFC_CHECK(k >= 1 && k <= 6, "best_assignment: need 1 <= K <= 6, got " << k);
  for (const auto& row : cost)
    TFC_CHECK(row.size() == k, "best_assignment: cost matrix must be square");

  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best = HUGE_VAL;
  do {
    double total = 0.0;
    for (size_t i = 0; i < k; ++i) total += cost[i][static_cast<size_t>(perm[i])];
    if (total < best) {
      best = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_perm, best};
}

PitOutcome pit_loss(const SpectraSet& est, const SpectraSet& ref,
                    const ad::Var& est_wav, const ad::Var& ref_wav) {
  check_same_shape(est.re, ref.re, "pit_loss");
  check_same_shape(est.im, ref.im, "pit_loss");
  TFC_CHECK(est.re->value.rank() == 4, "pit_loss: spectra must be (K, Mout, T, F), got "
                                           << shape_str(est.re->value.shape()));
  const int64_t k = est.re->value.extent(0);
  TFC_CHECK(k >= 1 && k <= 4, "pit_loss: need 1 <= K <= 4 sources, got " << k);

  const bool with_wav = static_cast<bool>(est_wav) || static_cast<bool>(ref_wav);
  if (with_wav) {
    check_same_shape(est_wav, ref_wav, "pit_loss (wav)");
    TFC_CHECK(est_wav->value.rank() >= 2 && est_wav->value.extent(0) == k,
              "pit_loss: wav stacks must lead with K=" << k << ", got "
                                                       << shape_str(est_wav->value.shape()));
  }

  const std::vector<int64_t> ones(static_cast<size_t>(k), 1);
  auto yre = ad::split(est.re, 0, ones), yim = ad::split(est.im, 0, ones);
  auto sre = ad::split(ref.re, 0, ones), sim = ad::split(ref.im, 0, ones);
  std::vector<ad::Var> ywav, swav;
  if (with_wav) {
    ywav = ad::split(est_wav, 0, ones);
    swav = ad::split(ref_wav, 0, ones);
  }

  // pairwise assignment costs: spectral plus (optionally) time-domain terms
  std::vector<std::vector<ad::Var>> tf(static_cast<size_t>(k)), wav(static_cast<size_t>(k));
  std::vector<std::vector<double>> cost(static_cast<size_t>(k),
                                        std::vector<double>(static_cast<size_t>(k)));
  for (size_t i = 0; i < static_cast<size_t>(k); ++i)
    for (size_t j = 0; j < static_cast<size_t>(k); ++j) {
      tf[i].push_back(loss_tf_pair(yre[i], yim[i], sre[j], sim[j]));
      double c = tf[i][j]->value.at(0);
      if (with_wav) {
        wav[i].push_back(loss_wav_pair(ywav[i], swav[j]));
        c += wav[i][j]->value.at(0);
      }
      cost[i][j] = c;
    }

  auto [perm, best] = best_assignment(cost);
  (void)best;

  ad::Var total_tf = tf[0][static_cast<size_t>(perm[0])];
  for (size_t i = 1; i < static_cast<size_t>(k); ++i)
    total_tf = ad::add(total_tf, tf[i][static_cast<size_t>(perm[i])]);

  PitOutcome out;
  out.report.chosen_permutation = perm;
  out.report.l_tf = total_tf->value.at(0);
  out.total = total_tf;
  if (with_wav) {
    ad::Var total_wav = wav[0][static_cast<size_t>(perm[0])];
    for (size_t i = 1; i < static_cast<size_t>(k); ++i)
      total_wav = ad::add(total_wav, wav[i][static_cast<size_t>(perm[i])]);
    ad::Var mc = loss_mc(est_wav, ref_wav);
    out.report.l_wav = total_wav->value.at(0);
    out.report.l_mc = mc->value.at(0);
    out.total = ad::add(ad::add(out.total, total_wav), mc);
  }
  out.report.total = out.total->value.at(0);
  return out;
}

}  // namespace tfcorr
