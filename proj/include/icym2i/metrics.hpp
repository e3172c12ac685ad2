#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace icym2i {

/// Pairwise-weighted AUROC with half credit for ties. Empty weights mean all ones.
/// Throws NumericalError when either class has zero total weight.
double weighted_auroc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      std::span<const double> weights = {});

/// sum w (s - y)^2 / sum w.
double weighted_brier(std::span<const double> scores, std::span<const std::uint8_t> labels,
                      std::span<const double> weights = {});

double kish_effective_n(std::span<const double> weights, std::size_t n);

struct Dispersion {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
};

/// Metric over index subsets of the evaluation rows.
using BatchMetric = std::function<double(std::span<const std::size_t>)>;

/// Seeded partition of [0, n) into floor(n / batch_size) full batches; metric mean and sd.
/// Requires at least two full batches. Batches where the metric is undefined are skipped.
Dispersion batch_dispersion(const BatchMetric& metric, std::size_t n, std::size_t batch_size,
                            std::uint64_t seed);

double rmse_vs_oracle(std::span<const double> estimates, std::span<const double> oracle);

struct MetricReport {
  std::string arm;
  std::string modality;
  double auroc = 0.0;
  double brier = 0.0;
  double n_effective = 0.0;
  double batch_sd = 0.0;
  std::size_t batch_size = 0;
};

}  // namespace icym2i
