#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icym2i/data.hpp"
#include "icym2i/infotheory.hpp"
#include "icym2i/propensity.hpp"

namespace icym2i {

enum class Provenance { kEmpiricalFull, kEmpiricalObserved, kIpwCorrected, kModel };
std::string_view to_string(Provenance p);

enum class PidArm { kOracle, kObserved, kIcym2i };
std::string_view to_string(PidArm a);

/// Target pairwise joints p(y, x1) and p(y, x2), row-major (y outer).
struct MarginalPair {
  std::size_t ny = 0, n1 = 0, n2 = 0;
  std::vector<double> y_x1;
  std::vector<double> y_x2;
  Provenance provenance = Provenance::kEmpiricalFull;
  bool reconciled = false;  // Y-marginals disagreed and were averaged

  static MarginalPair from_joint(const DiscreteJoint& j, Provenance p = Provenance::kEmpiricalFull);

  std::vector<double> y_from_x1() const;
  std::vector<double> y_from_x2() const;
  /// max_y |p(y) from x1 table - p(y) from x2 table|
  double y_discrepancy() const;
  /// Averages the two Y-marginals and rescales each table to it.
  void reconcile();
  /// Sums to one, nonnegative, consistent Y-marginal within tol.
  void validate(double tol = 1e-6) const;
};

/// Integer codes for each modality of every dataset row.
struct Binning {
  std::vector<int> b1, b2;
  std::size_t n1 = 0, n2 = 0;
};

/// Bins rows with the given quantizers; a null quantizer requires a single 0/1 column
/// and uses the raw value.
Binning bin_dataset(const Dataset& ds, const Quantizer* q1, const Quantizer* q2);

/// Empirical pairwise joints: oracle on all rows, observed on complete cases,
/// icym2i on complete cases weighted by ipw_weights(propensity).
MarginalPair marginals_from_data(const Dataset& ds, PidArm arm, const PropensityModel* propensity,
                                 const Binning& bins);

/// Same from explicit rows and weights (weights empty = all ones).
MarginalPair weighted_marginals(const Dataset& ds, std::span<const std::size_t> rows,
                                std::span<const double> weights, const Binning& bins, Provenance prov);

/// Model-based targets P_i(y, b) = sum_r w_r 1[bin_i(r) = b] p_i(y | x_r) / sum_r w_r, binary Y.
/// Inconsistent Y-marginals are reconciled (flagged on the result).
MarginalPair model_marginals(std::span<const int> b1, std::span<const int> b2, std::size_t n1, std::size_t n2,
                             std::span<const double> p1_x1, std::span<const double> p1_x2,
                             std::span<const double> weights, Provenance prov);

struct SinkhornOptions {
  double atol = 1e-6;
  int max_rounds = 500;
};

struct SinkhornResult {
  DiscreteJoint q;
  int rounds = 0;              // rounds in which at least one rescaling was applied
  bool converged = false;
  double error_x1 = 0.0;       // max relative error of q(y, x1) vs target
  double error_x2 = 0.0;
  std::size_t zeroed_cells = 0;  // q support removed where the target is zero
};

/// Relative marginal errors max |q - p| / p over cells with p > 0.
double relative_error_x1(const DiscreteJoint& q, const MarginalPair& t);
double relative_error_x2(const DiscreteJoint& q, const MarginalPair& t);

/// Alternating rescaling to the (Y,X2) then (Y,X1) targets with early exits.
SinkhornResult sinkhorn_project(const DiscreteJoint& q, const MarginalPair& targets,
                                const SinkhornOptions& opt = {});

struct PIDResult {
  double unique1 = 0.0;
  double unique2 = 0.0;
  double shared = 0.0;
  double complementary = 0.0;
  double total_mi = 0.0;
  double residual = 0.0;
  double min_mi = 0.0;  // I_q*(Y:(X1,X2))
  // diagnostics
  std::string solver;
  int iterations = 0;
  int sk_rounds = 0;
  double marginal_error = 0.0;
  double objective_value = 0.0;
  bool converged = false;
  bool sk_converged = true;
  bool reconciled = false;
  std::vector<std::string> warnings;
  DiscreteJoint q;
};

/// Evaluates the four bounds at a minimizer q* given the total MI.
PIDResult pid_from_q(const DiscreteJoint& q, double total_mi);

struct OracleOptions {
  int grid_points = 2001;
  double refine_tol = 1e-7;
  int restarts = 20;
  int pgd_iterations = 2000;
  std::uint64_t seed = 0;
};

/// Exact minimization of I_q(Y:(X1,X2)) over the marginal polytope.
/// Binary X1, X2 with |Y| <= 2: grid over each y's coupling parameter plus pattern refinement.
/// Otherwise projected gradient with Dykstra projection and seeded restarts.
PIDResult pid_oracle(const MarginalPair& marginals, double total_mi, const OracleOptions& opt = {});
PIDResult pid_oracle(const MarginalPair& marginals, const DiscreteJoint& full_joint, const OracleOptions& opt = {});

/// Minimizer only.
DiscreteJoint oracle_minimizer(const MarginalPair& marginals, const OracleOptions& opt, std::string* method = nullptr);

/// q(y, x1, x2) proportional to exp(f1[x1][y] * f2[x2][y]).
struct QParametrization {
  std::size_t ny = 0, n1 = 0, n2 = 0;
  std::vector<double> f1;  // n1 x ny
  std::vector<double> f2;  // n2 x ny

  DiscreteJoint joint() const;
  /// f_i[b][y] = log p(y | x_i = b) from the targets, plus seeded jitter of the given size.
  static QParametrization from_marginals(const MarginalPair& m, std::uint64_t seed, double jitter);
};

struct ObjectiveEval {
  double value = 0.0;
  std::vector<double> grad_f1, grad_f2;
  int rounds = 0;
  double error = 0.0;  // max relative marginal error after the unrolled projection
};

/// I_q(Y:(X1,X2)) in bits after an unrolled projection of at most `max_rounds`, and
/// its gradient with respect to the score factors.
ObjectiveEval unrolled_objective(const QParametrization& theta, const MarginalPair& targets, int max_rounds,
                                 double atol, bool want_gradient);

struct SolverOptions {
  double learning_rate = 0.01;
  int max_steps = 2000;
  double tolerance = 1e-6;  // minimum improvement over `window` steps
  int window = 20;
  int abort_window = 100;   // consecutive increases that abort the solve
  int unrolled_rounds = 50;
  SinkhornOptions final_projection{};
  double jitter = 1e-3;
  std::uint64_t seed = 0;
};

/// Gradient descent on the score factors with the projection inside the objective.
PIDResult solve_pid(const MarginalPair& targets, double total_mi, const SolverOptions& opt = {});

/// Inputs to the estimator on one arm. All per-row vectors align with `rows`.
struct PidInputs {
  std::vector<int> b1, b2;       // bins per row
  std::size_t n1 = 0, n2 = 0;
  std::vector<double> ipw;        // weights for the marginal targets (empty = ones)
  std::vector<double> stabilized; // weights for the corrected total MI (empty = ones)
  std::vector<double> p_x1, p_x2, p_x12;  // calibrated p(y = 1 | .) per row
  Provenance provenance = Provenance::kModel;
};

/// Estimator on trained models: model-based corrected targets, solver, and
/// corrected total MI.
PIDResult pid_icym2i(const PidInputs& in, const SolverOptions& opt = {});

}  // namespace icym2i
