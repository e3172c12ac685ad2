#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icym2i/common.hpp"

namespace icym2i {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

/// Dense row-major block of features for one modality.
class ModalityMatrix {
 public:
  ModalityMatrix() = default;
  ModalityMatrix(std::size_t rows, std::size_t cols);
  ModalityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const ModalityMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Per-row missingness flags, 1 = missing.
struct MissingnessMask {
  std::vector<std::uint8_t> m1, m2, my;

  static MissingnessMask all_observed(std::size_t n);
  std::size_t size() const { return m1.size(); }
  bool complete(std::size_t i) const { return m1[i] == 0 && m2[i] == 0 && my[i] == 0; }
  bool operator==(const MissingnessMask&) const = default;
};

struct Dataset {
  ModalityMatrix x1;
  ModalityMatrix x2;
  std::vector<std::uint8_t> y;
  MissingnessMask mask;
  std::vector<Split> split;
  std::uint64_t seed = 0;

  std::size_t size() const { return y.size(); }

  /// Throws InvalidArgument when row counts disagree or flags are not 0/1.
  void validate() const;

  std::vector<std::size_t> all_rows() const;
  std::vector<std::size_t> rows(Split s) const;
  std::vector<std::size_t> complete_rows() const;
  std::vector<std::size_t> complete_rows(Split s) const;

  bool operator==(const Dataset&) const = default;
};

enum class Gate { kAnd, kOr, kXor };

std::string_view to_string(Gate g);
Gate gate_from_string(std::string_view s);
std::uint8_t apply_gate(Gate g, std::uint8_t a, std::uint8_t b);

/// Two fair bits and y = gate(x1, x2); fully observed, seeded 80/10/10 split.
Dataset generate_logic_gate(Gate gate, std::size_t n, std::uint64_t seed);

struct ClusteredLatentSpec {
  double p1 = 0.0;
  double p2 = 0.0;
  std::size_t latent_dim = 4;    // dimension of each of z1, z2, zc
  std::size_t clusters = 4;      // mixture components per latent
  double cluster_spread = 2.0;   // sd of the mixture centres
  double within_sd = 1.0;        // sd inside a component
  std::size_t n = 10000;
  std::uint64_t seed = 0;
};

/// x1 = [zc, z1], x2 = [zc, z2], y ~ Bern(sigmoid(p1 mean(z1) + p2 mean(z2) + (1-p1-p2) mean(zc))).
Dataset generate_clustered_latent(const ClusteredLatentSpec& spec);

/// Assigns train/val/test tags by a seeded permutation (first 80% train, next 10% val).
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed);

enum class MechanismKind { kMcar, kMar, kMnar };
enum class MaskTarget { kX2AndY, kX2Only, kYOnly };

std::string_view to_string(MechanismKind k);
std::string_view to_string(MaskTarget t);
MechanismKind mechanism_kind_from_string(std::string_view s);
MaskTarget mask_target_from_string(std::string_view s);

/// Logistic missingness model P(M = 1 | v) = sigmoid(intercept + coefficients . v).
///
/// The driver vector v depends on kind and target:
///   MCAR: none (probability is `rate`);
///   MAR:  x1 features (x1 and x2 when only y is masked);
///   MNAR: the masked variable itself (x2 features, or y).
/// When `rate` is set for MAR/MNAR, the intercept is recalibrated by bisection
/// so that the mean missingness probability over the dataset equals `rate`.
struct MechanismSpec {
  MechanismKind kind = MechanismKind::kMcar;
  MaskTarget target = MaskTarget::kX2AndY;
  std::vector<double> coefficients;
  double intercept = 0.0;
  std::optional<double> rate;
  double floor = 0.01;  // minimum admissible observation probability

  static MechanismSpec mcar(double rate, MaskTarget target = MaskTarget::kX2AndY);

  /// Single binary driver with P(M=1 | v=0) = p0 and P(M=1 | v=1) = p1.
  static MechanismSpec binary(MechanismKind kind, double p0, double p1,
                              MaskTarget target = MaskTarget::kX2AndY);

  void validate() const;
};

struct MaskedDataset {
  Dataset data;
  std::vector<double> observation_prob;  // true P(M = 0 | .) per row
  MechanismSpec resolved;                // intercept after calibration
};

/// Positivity violation raised by apply_missingness.
class PositivityError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Draws a mask according to `spec`. `ds` must be fully observed.
MaskedDataset apply_missingness(const Dataset& ds, const MechanismSpec& spec, std::uint64_t seed);

/// True missingness probabilities P(M = 1 | .) for every row under `spec`.
std::vector<double> missingness_probabilities(const Dataset& ds, const MechanismSpec& spec);

/// Columnar text: header x1_0..,x2_0..,y,m1,m2,my,split; 9 significant digits.
void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_csv(std::istream& in);

}  // namespace icym2i
