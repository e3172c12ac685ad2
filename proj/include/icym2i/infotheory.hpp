#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icym2i/common.hpp"

namespace icym2i {

/// Variable subset flags for entropy().
enum Var : unsigned { kY = 1u, kX1 = 2u, kX2 = 4u };

/// Probability table over Y x X1 x X2, stored with x2 fastest. Entropies are in bits.
class DiscreteJoint {
 public:
  DiscreteJoint() = default;
  DiscreteJoint(std::size_t ny, std::size_t n1, std::size_t n2);
  DiscreteJoint(std::size_t ny, std::size_t n1, std::size_t n2, std::vector<double> prob);

  std::size_t ny() const { return ny_; }
  std::size_t n1() const { return n1_; }
  std::size_t n2() const { return n2_; }
  std::size_t cells() const { return p_.size(); }

  std::size_t index(std::size_t y, std::size_t a, std::size_t b) const { return (y * n1_ + a) * n2_ + b; }
  double operator()(std::size_t y, std::size_t a, std::size_t b) const { return p_[index(y, a, b)]; }
  double& operator()(std::size_t y, std::size_t a, std::size_t b) { return p_[index(y, a, b)]; }
  const std::vector<double>& prob() const { return p_; }
  std::vector<double>& prob() { return p_; }

  double total() const;
  void normalize();
  /// Throws InvalidArgument unless entries are >= 0 and sum to 1 within tol.
  void validate(double tol = 1e-9) const;

  /// Pairwise tables, row-major: (Y x X1), (Y x X2), (X1 x X2).
  std::vector<double> y_x1() const;
  std::vector<double> y_x2() const;
  std::vector<double> x1_x2() const;
  std::vector<double> marginal_y() const;

  /// Reorders the three axes; perm[k] names which current axis (0=Y,1=X1,2=X2) becomes axis k.
  DiscreteJoint permuted(std::array<int, 3> perm) const;

  /// Weighted empirical table of integer-coded samples (weights empty = all ones).
  static DiscreteJoint from_samples(std::span<const int> y, std::span<const int> b1, std::span<const int> b2,
                                    std::span<const double> weights, std::size_t ny, std::size_t n1,
                                    std::size_t n2);

  /// Columnar text y,x1,x2,prob.
  void write_text(std::ostream& out) const;
  static DiscreteJoint read_text(std::istream& in);

 private:
  std::size_t ny_ = 0, n1_ = 0, n2_ = 0;
  std::vector<double> p_;
};

/// Entropy of the marginal over the variables in `subset` (bitmask of Var).
double entropy(const DiscreteJoint& j, unsigned subset);

double binary_entropy(double p);

/// I(Y:(X1,X2)) = H(Y) + H(X1,X2) - H(Y,X1,X2)
double mi_y_x1x2(const DiscreteJoint& j);
/// I(Y:X1) = H(Y) + H(X1) - H(Y,X1)
double mi_y_x1(const DiscreteJoint& j);
double mi_y_x2(const DiscreteJoint& j);
/// I(Y:X2|X1) = H(Y,X1) + H(X1,X2) - H(Y,X1,X2) - H(X1)
double cmi_y_x2_given_x1(const DiscreteJoint& j);
/// I(Y:X1|X2) = H(Y,X2) + H(X1,X2) - H(Y,X1,X2) - H(X2)
double cmi_y_x1_given_x2(const DiscreteJoint& j);
/// H(Y)+H(X1)+H(X2) - H(X1,X2) - H(Y,X1) - H(Y,X2) + H(Y,X1,X2)
double coinformation(const DiscreteJoint& j);

struct IpwMiDiagnostics {
  std::size_t clamped = 0;  // samples with a probability moved into [1e-9, 1 - 1e-9]
  double weight_mean = 0.0;
};

/// Corrected mutual information in bits:
///   sum_i mass_i * w_i * sum_y p(y|x_i) log2(p(y|x_i) / p(y)),
/// with p(y) = sum_i mass_i w_i p(y|x_i) / sum_i mass_i w_i.
/// `cond` holds n rows of `ny` class probabilities (row-major); `mass` defaults to 1/n.
/// The expectation over y is taken in closed form, which requires w not to depend on y.
double ipw_mutual_info(std::span<const double> cond, std::size_t ny, std::span<const double> weights,
                       std::span<const double> mass = {}, IpwMiDiagnostics* diag = nullptr);

/// Binary-label convenience: p1[i] = p(y=1 | x_i).
double ipw_mutual_info_binary(std::span<const double> p1, std::span<const double> weights,
                              std::span<const double> mass = {}, IpwMiDiagnostics* diag = nullptr);

/// k-means codebook for one modality.
struct Quantizer {
  Eigen::MatrixXd centroids;  // k_eff x d, rows sorted lexicographically
  std::size_t k = 0;          // requested
  std::uint64_t seed = 0;
  bool degenerate = false;    // fewer distinct points than k; k_eff < k

  std::size_t bins() const { return static_cast<std::size_t>(centroids.rows()); }
  /// Nearest centroid, ties to the lowest index.
  int assign(std::span<const double> x) const;
  std::vector<int> apply(const Eigen::MatrixXd& features) const;
};

/// k-means++ seeding, 50 Lloyd iterations.
Quantizer fit_quantizer(const Eigen::MatrixXd& features, std::size_t k, std::uint64_t seed);

}  // namespace icym2i
