#pragma once

#include <span>
#include <string>
#include <vector>

#include "icym2i/data.hpp"

namespace icym2i {

/// Which observed columns form the covariate set C of the missingness model.
struct CovariateSelector {
  bool x1 = true;
  bool x2 = false;
  bool y = false;

  std::vector<std::string> names(const Dataset& ds) const;
  void extract(const Dataset& ds, std::size_t row, std::vector<double>& out) const;
  /// True when every selected column is observed on `row`.
  bool observed(const Dataset& ds, std::size_t row) const;
};

enum class WeightNormalization { kNone, kMeanOne };
enum class WeightKind { kInverseProbability, kStabilized };

struct WeightVector {
  std::vector<double> w;
  WeightNormalization normalization = WeightNormalization::kNone;
  WeightKind kind = WeightKind::kInverseProbability;
  std::size_t floor_hits = 0;  // rows whose probability was clamped to the floor

  std::size_t size() const { return w.size(); }
  double max() const;
};

struct PropensityOptions {
  double floor = 0.01;
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  double ridge_fallback = 1e-4;
};

struct PropensityFitReport {
  int iterations = 0;
  bool converged = false;
  bool ridge_fallback = false;  // separation detected, refit with a small penalty
  double gradient_norm = 0.0;
  double heldout_log_loss = 0.0;
};

/// Logistic model of P(M = 1 | C), M = "row is not a complete case".
class PropensityModel {
 public:
  std::vector<double> coefficients;
  double intercept = 0.0;
  double floor = 0.01;
  CovariateSelector selector;
  std::vector<std::string> covariate_names;
  PropensityFitReport report;

  double missing_prob(std::span<const double> covariates) const;
  /// P(M = 0 | C) clamped to [floor, 1]; sets *clamped when the floor was hit.
  double observation_prob(std::span<const double> covariates, bool* clamped = nullptr) const;

  /// Throws SchemaError when `ds` does not expose the recorded covariate columns.
  void check_schema(const Dataset& ds) const;

  std::string to_text() const;
  static PropensityModel from_text(const std::string& text);
};

/// Fits the missingness model by IRLS on `rows` (all rows when empty).
PropensityModel fit_propensity(const Dataset& ds, const CovariateSelector& selector,
                               std::span<const std::size_t> rows = {},
                               const PropensityOptions& options = {});

/// w_i = 1 / max(floor, P(M=0 | C_i)) on complete-case `rows`.
WeightVector ipw_weights(const PropensityModel& model, const Dataset& ds,
                         std::span<const std::size_t> rows,
                         WeightNormalization normalization = WeightNormalization::kNone);

/// Same weights from known observation probabilities (one per entry).
WeightVector ipw_weights_from_probabilities(std::span<const double> observation_prob, double floor,
                                            WeightNormalization normalization);

/// Stabilized weights (1 - p(m)) / (1 - p(m | c_i)) on complete-case `rows`.
/// p(m) is the mean model missingness probability over all rows of `ds`,
/// which equals the empirical missing fraction for a converged fit.
WeightVector mi_correction_weights(const PropensityModel& model, const Dataset& ds,
                                   std::span<const std::size_t> rows);

WeightVector stabilized_weights_from_probabilities(std::span<const double> observation_prob,
                                                   double marginal_observation_rate, double floor);

void normalize_mean_one(WeightVector& wv);

/// Kish effective sample size (sum w)^2 / sum w^2.
double kish_effective_size(std::span<const double> w);

}  // namespace icym2i
