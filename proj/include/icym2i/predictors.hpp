#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icym2i/data.hpp"

namespace icym2i {

enum class InputSchema { kX1, kX2, kBoth };

std::string_view to_string(InputSchema s);
InputSchema input_schema_from_string(std::string_view s);

enum class Architecture { kLogistic, kMlp };

struct MLPConfig {
  int hidden_layers = 2;
  int hidden_width = 32;
  double learning_rate = 0.001;
  int epochs = 100;
  int batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Feature rows for one schema, row-major (n x d).
Eigen::MatrixXd schema_features(const Dataset& ds, InputSchema schema,
                                std::span<const std::size_t> rows);

struct TrainingDiagnostics {
  int best_epoch = -1;          // epoch whose parameters were retained (-1: none selected)
  double best_val_loss = 0.0;
  double final_train_loss = 0.0;
  double max_weight = 0.0;
  bool calibrated = false;
  bool calibration_degenerate = false;  // single-class validation labels
};

/// Feed-forward binary classifier. A logistic model is the zero-hidden-layer case.
class Classifier {
 public:
  Architecture architecture = Architecture::kLogistic;
  InputSchema schema = InputSchema::kBoth;
  std::size_t input_dim = 0;
  std::vector<double> feature_mean;   // standardization applied before the first layer
  std::vector<double> feature_scale;
  std::vector<Eigen::MatrixXd> weights;  // layer k: out x in
  std::vector<Eigen::VectorXd> biases;
  double temperature = 1.0;
  TrainingDiagnostics diagnostics;

  /// Logistic classifier with zero weights (predicts 0.5 everywhere).
  static Classifier logistic(InputSchema schema, std::size_t input_dim);

  /// Calibrated logits for an n x d block of raw features.
  Eigen::VectorXd logits(const Eigen::MatrixXd& features) const;
  std::vector<double> predict_proba(const Eigen::MatrixXd& features) const;
  std::vector<double> predict_proba(const Dataset& ds, std::span<const std::size_t> rows) const;

  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;

  std::string to_text() const;
  static Classifier from_text(const std::string& text);
};

/// Minimizes sum_i w_i * bce(f(x_i), y_i) / sum_i w_i with Adam.
/// `weights` (one per train row, or empty for unweighted) are normalized to mean one.
/// When `val_rows` is nonempty the parameters with the lowest weighted validation
/// loss (over epochs) are kept.
Classifier train(const Dataset& ds, InputSchema schema, Architecture arch,
                 std::span<const std::size_t> train_rows, std::span<const double> weights,
                 const MLPConfig& cfg, std::span<const std::size_t> val_rows = {},
                 std::span<const double> val_weights = {});

/// Same, on explicit feature matrices.
Classifier train(const Eigen::MatrixXd& x, std::span<const std::uint8_t> y,
                 std::span<const double> weights, InputSchema schema, Architecture arch,
                 const MLPConfig& cfg, const Eigen::MatrixXd& x_val = {},
                 std::span<const std::uint8_t> y_val = {}, std::span<const double> w_val = {});

/// Temperature scaling fit by weighted NLL on validation rows (at least 50).
Classifier calibrate(const Classifier& clf, const Dataset& ds, std::span<const std::size_t> val_rows,
                     std::span<const double> weights = {});

/// Temperature that minimizes weighted NLL of sigmoid(z / T) against y, T in [0.01, 100].
double fit_temperature(std::span<const double> logits, std::span<const std::uint8_t> y,
                       std::span<const double> weights);

}  // namespace icym2i
