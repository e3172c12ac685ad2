#include "icym2i/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "icym2i/common.hpp"

namespace icym2i {

namespace {

void check_lengths(std::size_t s, std::size_t l, std::size_t w, const char* what) {
  if (s != l) throw InvalidArgument(strprintf("%s: %zu scores vs %zu labels", what, s, l));
  if (w != 0 && w != s) throw InvalidArgument(strprintf("%s: %zu weights vs %zu scores", what, w, s));
}

}  // namespace

double weighted_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      std::span<const double> weights) {
  check_lengths(scores.size(), labels.size(), weights.size(), "weighted_auroc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  auto wt = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  // Sweep groups of tied scores in increasing order; accumulate the negative
  // weight strictly below each positive.
  double neg_below = 0.0, num = 0.0, wpos = 0.0, wneg = 0.0;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    double gp = 0.0, gn = 0.0;
    while (e < n && scores[order[e]] == scores[order[g]]) {
      const double w = wt(order[e]);
      if (!(w >= 0) || !std::isfinite(w)) throw InvalidArgument("weighted_auroc: weights must be finite and >= 0");
      (labels[order[e]] ? gp : gn) += w;
      ++e;
    }
    num += gp * (neg_below + 0.5 * gn);
    neg_below += gn;
    wpos += gp;
    wneg += gn;
    g = e;
  }
  if (!(wpos > 0) || !(wneg > 0))
    throw NumericalError("weighted_auroc: undefined, both classes need positive total weight");
  return num / (wpos * wneg);
}

double weighted_brier(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      std::span<const double> weights) {
  check_lengths(scores.size(), labels.size(), weights.size(), "weighted_brier");
  double s = 0.0, sw = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0))
      throw InvalidArgument("weighted_brier: scores must lie in [0, 1]");
    const double w = weights.empty() ? 1.0 : weights[i];
    const double d = scores[i] - labels[i];
    s += w * d * d;
    sw += w;
  }
  if (!(sw > 0)) throw NumericalError("weighted_brier: total weight is zero");
  return s / sw;
}

double kish_effective_n(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return static_cast<double>(n);
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0 ? s * s / s2 : 0.0;
}

Dispersion batch_dispersion(const BatchMetric& metric, std::size_t n, std::size_t batch_size,
                            std::uint64_t seed) {
  if (batch_size == 0) throw InvalidArgument("batch_dispersion: batch size must be positive");
  const std::size_t nb = n / batch_size;
  if (nb < 2)
    throw InvalidArgument(strprintf("batch_dispersion: %zu rows give fewer than 2 batches of %zu", n, batch_size));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {"batches"}));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> vals;
  for (std::size_t b = 0; b < nb; ++b) {
    std::span<const std::size_t> idx(perm.data() + b * batch_size, batch_size);
    try {
      vals.push_back(metric(idx));
    } catch (const NumericalError&) {
      // single-class batch: metric undefined there
    }
  }
  Dispersion d;
  d.batch_size = batch_size;
  d.batches = vals.size();
  if (vals.empty()) throw NumericalError("batch_dispersion: metric undefined on every batch");
  d.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  double v = 0.0;
  for (double x : vals) v += (x - d.mean) * (x - d.mean);
  d.sd = vals.size() > 1 ? std::sqrt(v / static_cast<double>(vals.size() - 1)) : 0.0;
  return d;
}

double rmse_vs_oracle(std::span<const double> estimates, std::span<const double> oracle) {
  if (estimates.size() != oracle.size() || estimates.empty())
    throw InvalidArgument("rmse_vs_oracle: inputs must have equal nonzero length");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - oracle[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(estimates.size()));
}

}  // namespace icym2i
