#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icym2i/data.hpp"
#include "icym2i/pid.hpp"
#include "icym2i/predictors.hpp"
#include "icym2i/propensity.hpp"

namespace icym2i {

/// Train/eval correction cells. oracle trains and evaluates on full data.
enum class ArmKind { kOracle, kObserved, kIcym2i, kTrainOnly, kEvalOnly };

std::string_view to_string(ArmKind a);
ArmKind arm_from_string(std::string_view s);

struct GeneratorConfig {
  std::string type = "logic_gate";  // logic_gate | clustered_latent
  std::vector<Gate> gates{Gate::kAnd, Gate::kOr, Gate::kXor};
  std::vector<std::pair<double, double>> mixing;  // (p1, p2) per clustered-latent setting
  std::size_t n = 10000;
  ClusteredLatentSpec latent{};

  /// Setting labels in run order ("AND", or "p1=0.20,p2=0.40").
  std::vector<std::string> settings() const;
};

struct PropensityConfig {
  std::string source = "fitted";  // fitted | true
  CovariateSelector covariates{};
  double floor = 0.01;
};

struct ModelConfig {
  Architecture architecture = Architecture::kMlp;
  MLPConfig mlp{};
  bool calibrate = true;
};

struct PidConfig {
  bool enabled = true;
  std::size_t bins = 8;  // quantizer size for continuous modalities
  SolverOptions solver{};
};

struct ExperimentConfig {
  std::string name = "custom";
  GeneratorConfig generator{};
  std::optional<MechanismSpec> mechanism;
  PropensityConfig propensity{};
  std::vector<ArmKind> arms{ArmKind::kOracle, ArmKind::kObserved, ArmKind::kIcym2i};
  ModelConfig model{};
  PidConfig pid{};
  std::size_t batch_size = 1024;
  std::vector<std::uint64_t> seeds{0};
  std::string output = "out";
  int jobs = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// FNV-1a over the canonical JSON serialization (output path and jobs excluded).
  std::string hash() const;
};

/// table1 | table2 | table4 | table5
ExperimentConfig preset(std::string_view name);

struct MetricRow {
  std::string setting;
  std::string arm;
  std::uint64_t seed = 0;
  std::string modality;  // x1 | x2 | x1+x2
  double auroc = 0.0;
  double brier = 0.0;
  double n_effective = 0.0;
  double batch_sd = 0.0;
  std::size_t batch_size = 0;
  std::size_t batches = 0;

  bool operator==(const MetricRow&) const = default;
};

struct PidRow {
  std::string setting;
  std::string arm;
  std::uint64_t seed = 0;
  double unique1 = 0.0, unique2 = 0.0, shared = 0.0, complementary = 0.0;
  double total_mi = 0.0, residual = 0.0;
  std::string solver;
  int iterations = 0;
  int sk_rounds = 0;
  double marginal_error = 0.0;
  double objective_value = 0.0;
  bool converged = false;
  bool sk_converged = false;
  bool reconciled = false;

  bool operator==(const PidRow&) const = default;
};

struct RmseRow {
  std::string arm;
  double rmse = 0.0;
  std::size_t cells = 0;

  bool operator==(const RmseRow&) const = default;
};

struct ExperimentReport {
  std::string name;
  std::string config_hash;
  std::string version;
  bool complete = true;
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  std::vector<MetricRow> metrics;
  std::vector<PidRow> pid;
  std::vector<RmseRow> rmse;

  bool operator==(const ExperimentReport&) const = default;

  nlohmann::json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& j);
};

/// Runs every (seed, setting) task; deterministic for a given config.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Mean over seeds of a table cell. column: X1, X2, X1+X2, Unique 1, Unique 2, Shared, Complementary.
std::optional<double> report_cell(const ExperimentReport& r, const std::string& setting, const std::string& arm,
                                  const std::string& column);

/// RMSE of each non-oracle arm's AUROCs against the oracle arm over all (setting, seed, modality).
std::vector<RmseRow> rmse_summary(const std::vector<MetricRow>& metrics);

/// Aligned text table (mean over seeds, batch sd in parentheses).
std::string format_table(const ExperimentReport& r);

/// Writes report.json and report.txt under `dir`.
void emit_report(const ExperimentReport& r, const std::string& dir);

struct CompareCell {
  std::string setting, arm, column;
  double reference = 0.0;
  double estimate = 0.0;
  double tolerance = 0.0;
  bool present = false;
  bool pass = false;
};

struct CompareResult {
  std::vector<CompareCell> cells;
  std::size_t failures = 0;
  bool ok() const { return failures == 0; }
};

/// Reference CSV: setting,arm,column,value[,tolerance]. Missing per-row tolerance uses `tolerance`.
CompareResult compare_to_reference(const ExperimentReport& r, std::istream& reference, double tolerance);

std::string format_comparison(const CompareResult& c);

}  // namespace icym2i
