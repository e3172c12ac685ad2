#include "icym2i/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "icym2i/common.hpp"

namespace icym2i {

namespace {

double plogp_sum(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::size_t ny, std::size_t n1, std::size_t n2)
    : ny_(ny), n1_(n1), n2_(n2), p_(ny * n1 * n2, 0.0) {
  if (ny == 0 || n1 == 0 || n2 == 0) throw InvalidArgument("DiscreteJoint: alphabet sizes must be positive");
}

DiscreteJoint::DiscreteJoint(std::size_t ny, std::size_t n1, std::size_t n2, std::vector<double> prob)
    : DiscreteJoint(ny, n1, n2) {
  if (prob.size() != p_.size())
    throw InvalidArgument(strprintf("DiscreteJoint: %zu cells given, %zu expected", prob.size(), p_.size()));
  p_ = std::move(prob);
}

double DiscreteJoint::total() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

void DiscreteJoint::normalize() {
  double s = total();
  if (!(s > 0)) throw InvalidArgument("DiscreteJoint::normalize: zero total mass");
  for (double& v : p_) v /= s;
}

void DiscreteJoint::validate(double tol) const {
  for (double v : p_)
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("DiscreteJoint: entries must be finite and >= 0");
  if (std::abs(total() - 1.0) > tol)
    throw InvalidArgument(strprintf("DiscreteJoint: total mass %.12g is not 1", total()));
}

std::vector<double> DiscreteJoint::y_x1() const {
  std::vector<double> out(ny_ * n1_, 0.0);
  for (std::size_t y = 0; y < ny_; ++y)
    for (std::size_t a = 0; a < n1_; ++a)
      for (std::size_t b = 0; b < n2_; ++b) out[y * n1_ + a] += (*this)(y, a, b);
  return out;
}

std::vector<double> DiscreteJoint::y_x2() const {
  std::vector<double> out(ny_ * n2_, 0.0);
  for (std::size_t y = 0; y < ny_; ++y)
    for (std::size_t a = 0; a < n1_; ++a)
      for (std::size_t b = 0; b < n2_; ++b) out[y * n2_ + b] += (*this)(y, a, b);
  return out;
}

std::vector<double> DiscreteJoint::x1_x2() const {
  std::vector<double> out(n1_ * n2_, 0.0);
  for (std::size_t y = 0; y < ny_; ++y)
    for (std::size_t a = 0; a < n1_; ++a)
      for (std::size_t b = 0; b < n2_; ++b) out[a * n2_ + b] += (*this)(y, a, b);
  return out;
}

std::vector<double> DiscreteJoint::marginal_y() const {
  std::vector<double> out(ny_, 0.0);
  for (std::size_t y = 0; y < ny_; ++y)
    for (std::size_t k = 0; k < n1_ * n2_; ++k) out[y] += p_[y * n1_ * n2_ + k];
  return out;
}

DiscreteJoint DiscreteJoint::permuted(std::array<int, 3> perm) const {
  std::array<int, 3> seen{0, 0, 0};
  for (int a : perm) {
    if (a < 0 || a > 2 || seen[static_cast<std::size_t>(a)]++) throw InvalidArgument("permuted: not a permutation");
  }
  const std::array<std::size_t, 3> dims{ny_, n1_, n2_};
  DiscreteJoint out(dims[static_cast<std::size_t>(perm[0])], dims[static_cast<std::size_t>(perm[1])],
                    dims[static_cast<std::size_t>(perm[2])]);
  std::array<std::size_t, 3> idx{};
  for (idx[0] = 0; idx[0] < ny_; ++idx[0])
    for (idx[1] = 0; idx[1] < n1_; ++idx[1])
      for (idx[2] = 0; idx[2] < n2_; ++idx[2])
        out(idx[static_cast<std::size_t>(perm[0])], idx[static_cast<std::size_t>(perm[1])],
            idx[static_cast<std::size_t>(perm[2])]) = (*this)(idx[0], idx[1], idx[2]);
  return out;
}

DiscreteJoint DiscreteJoint::from_samples(std::span<const int> y, std::span<const int> b1, std::span<const int> b2,
                                          std::span<const double> weights, std::size_t ny, std::size_t n1,
                                          std::size_t n2) {
  if (y.size() != b1.size() || y.size() != b2.size() || (!weights.empty() && weights.size() != y.size()))
    throw InvalidArgument("DiscreteJoint::from_samples: length mismatch");
  if (y.empty()) throw InvalidArgument("DiscreteJoint::from_samples: no samples");
  DiscreteJoint j(ny, n1, n2);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || b1[i] < 0 || b2[i] < 0 || static_cast<std::size_t>(y[i]) >= ny ||
        static_cast<std::size_t>(b1[i]) >= n1 || static_cast<std::size_t>(b2[i]) >= n2)
      throw InvalidArgument("DiscreteJoint::from_samples: code out of range");
    j(static_cast<std::size_t>(y[i]), static_cast<std::size_t>(b1[i]), static_cast<std::size_t>(b2[i])) +=
        weights.empty() ? 1.0 : weights[i];
  }
  j.normalize();
  return j;
}

void DiscreteJoint::write_text(std::ostream& out) const {
  out << "y,x1,x2,prob\n";
  for (std::size_t y = 0; y < ny_; ++y)
    for (std::size_t a = 0; a < n1_; ++a)
      for (std::size_t b = 0; b < n2_; ++b) out << y << ',' << a << ',' << b << ',' << strprintf("%.17g", (*this)(y, a, b)) << '\n';
}

DiscreteJoint DiscreteJoint::read_text(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "y,x1,x2,prob") throw InvalidArgument("DiscreteJoint::read_text: bad header");
  struct Cell {
    std::size_t y, a, b;
    double p;
  };
  std::vector<Cell> cells;
  std::size_t ny = 0, n1 = 0, n2 = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Cell c{};
    if (!(ls >> c.y >> c.a >> c.b >> c.p)) throw InvalidArgument("DiscreteJoint::read_text: malformed row: " + line);
    ny = std::max(ny, c.y + 1);
    n1 = std::max(n1, c.a + 1);
    n2 = std::max(n2, c.b + 1);
    cells.push_back(c);
  }
  DiscreteJoint j(ny, n1, n2);
  for (auto& c : cells) j(c.y, c.a, c.b) = c.p;
  return j;
}

double entropy(const DiscreteJoint& j, unsigned subset) {
  if (subset > 7u) throw InvalidArgument("entropy: invalid variable subset");
  if (subset == 0) return 0.0;
  const std::size_t ny = (subset & kY) ? j.ny() : 1;
  const std::size_t n1 = (subset & kX1) ? j.n1() : 1;
  const std::size_t n2 = (subset & kX2) ? j.n2() : 1;
  std::vector<double> m(ny * n1 * n2, 0.0);
  for (std::size_t y = 0; y < j.ny(); ++y)
    for (std::size_t a = 0; a < j.n1(); ++a)
      for (std::size_t b = 0; b < j.n2(); ++b) {
        const std::size_t yy = (subset & kY) ? y : 0;
        const std::size_t aa = (subset & kX1) ? a : 0;
        const std::size_t bb = (subset & kX2) ? b : 0;
        m[(yy * n1 + aa) * n2 + bb] += j(y, a, b);
      }
  return plogp_sum(m);
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log2(p);
  if (p < 1) h -= (1 - p) * std::log2(1 - p);
  return h;
}

double mi_y_x1x2(const DiscreteJoint& j) {
  return entropy(j, kY) + entropy(j, kX1 | kX2) - entropy(j, kY | kX1 | kX2);
}

double mi_y_x1(const DiscreteJoint& j) { return entropy(j, kY) + entropy(j, kX1) - entropy(j, kY | kX1); }

double mi_y_x2(const DiscreteJoint& j) { return entropy(j, kY) + entropy(j, kX2) - entropy(j, kY | kX2); }

double cmi_y_x2_given_x1(const DiscreteJoint& j) {
  return entropy(j, kY | kX1) + entropy(j, kX1 | kX2) - entropy(j, kY | kX1 | kX2) - entropy(j, kX1);
}

double cmi_y_x1_given_x2(const DiscreteJoint& j) {
  return entropy(j, kY | kX2) + entropy(j, kX1 | kX2) - entropy(j, kY | kX1 | kX2) - entropy(j, kX2);
}

double coinformation(const DiscreteJoint& j) {
  return entropy(j, kY) + entropy(j, kX1) + entropy(j, kX2) - entropy(j, kX1 | kX2) - entropy(j, kY | kX1) -
         entropy(j, kY | kX2) + entropy(j, kY | kX1 | kX2);
}

double ipw_mutual_info(std::span<const double> cond, std::size_t ny, std::span<const double> weights,
                       std::span<const double> mass, IpwMiDiagnostics* diag) {
  if (ny < 2) throw InvalidArgument("ipw_mutual_info: need at least two classes");
  if (cond.size() % ny != 0) throw InvalidArgument("ipw_mutual_info: probability block is not n x ny");
  const std::size_t n = cond.size() / ny;
  if (n == 0) throw InvalidArgument("ipw_mutual_info: no samples");
  if (weights.size() != n) throw InvalidArgument("ipw_mutual_info: one weight per sample required");
  if (!mass.empty() && mass.size() != n) throw InvalidArgument("ipw_mutual_info: one mass per sample required");
  constexpr double lo = 1e-9, hi = 1.0 - 1e-9;

  std::vector<double> p(cond.begin(), cond.end());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    bool hit = false;
    for (std::size_t y = 0; y < ny; ++y) {
      double& v = p[i * ny + y];
      if (!std::isfinite(v)) throw NumericalError("ipw_mutual_info: non-finite probability");
      if (v < lo || v > hi) {
        v = std::clamp(v, lo, hi);
        hit = true;
      }
      s += v;
    }
    clamped += hit;
    for (std::size_t y = 0; y < ny; ++y) p[i * ny + y] /= s;
  }

  std::vector<double> py(ny, 0.0);
  double norm = 0.0, wmean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mass.empty() ? 1.0 / static_cast<double>(n) : mass[i];
    norm += m * weights[i];
    wmean += m * weights[i];
    for (std::size_t y = 0; y < ny; ++y) py[y] += m * weights[i] * p[i * ny + y];
  }
  if (!(norm > 0)) throw NumericalError("ipw_mutual_info: zero total weight");
  for (double& v : py) v /= norm;

  double mi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = mass.empty() ? 1.0 / static_cast<double>(n) : mass[i];
    double inner = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      const double v = p[i * ny + y];
      inner += v * std::log2(v / py[y]);
    }
    mi += m * weights[i] * inner;
  }
  if (diag) {
    diag->clamped = clamped;
    diag->weight_mean = wmean;
  }
  return mi;
}

double ipw_mutual_info_binary(std::span<const double> p1, std::span<const double> weights,
                              std::span<const double> mass, IpwMiDiagnostics* diag) {
  std::vector<double> cond(2 * p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    cond[2 * i] = 1.0 - p1[i];
    cond[2 * i + 1] = p1[i];
  }
  return ipw_mutual_info(cond, 2, weights, mass, diag);
}

int Quantizer::assign(std::span<const double> x) const {
  if (static_cast<std::size_t>(centroids.cols()) != x.size())
    throw SchemaError("Quantizer: feature dimension mismatch");
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
      const double t = x[static_cast<std::size_t>(j)] - centroids(c, j);
      d += t * t;
    }
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<int> Quantizer::apply(const Eigen::MatrixXd& features) const {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  std::vector<double> row(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) row[static_cast<std::size_t>(j)] = features(i, j);
    out[static_cast<std::size_t>(i)] = assign(row);
  }
  return out;
}

Quantizer fit_quantizer(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 2) throw InvalidArgument("fit_quantizer: k must be at least 2");
  if (n < k) throw InvalidArgument(strprintf("fit_quantizer: %zu points for %zu bins", n, k));
  std::mt19937_64 rng(derive_seed(seed, {"kmeans"}));

  auto sqdist = [&](Eigen::Index i, const Eigen::RowVectorXd& c) { return (x.row(i) - c).squaredNorm(); };

  // k-means++ seeding; stop early when every point coincides with a chosen centre.
  std::vector<Eigen::RowVectorXd> centres;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centres.push_back(x.row(static_cast<Eigen::Index>(pick(rng))));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(static_cast<Eigen::Index>(i), centres[0]);
  while (centres.size() < k) {
    const double tot = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(tot > 0)) break;
    std::uniform_real_distribution<double> u(0.0, tot);
    double r = u(rng), acc = 0.0;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= r && d2[i] > 0) {
        chosen = i;
        break;
      }
    }
    if (d2[chosen] == 0) {
      for (std::size_t i = n; i-- > 0;)
        if (d2[i] > 0) {
          chosen = i;
          break;
        }
    }
    centres.push_back(x.row(static_cast<Eigen::Index>(chosen)));
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(static_cast<Eigen::Index>(i), centres.back()));
  }

  const std::size_t kk = centres.size();
  Eigen::MatrixXd c(static_cast<Eigen::Index>(kk), x.cols());
  for (std::size_t j = 0; j < kk; ++j) c.row(static_cast<Eigen::Index>(j)) = centres[j];

  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < 50; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < kk; ++j) {
        const double d = sqdist(static_cast<Eigen::Index>(i), c.row(static_cast<Eigen::Index>(j)));
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (best != assign[i]) changed = true;
      assign[i] = best;
    }
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kk), x.cols());
    std::vector<std::size_t> cnt(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum.row(static_cast<Eigen::Index>(assign[i])) += x.row(static_cast<Eigen::Index>(i));
      ++cnt[assign[i]];
    }
    for (std::size_t j = 0; j < kk; ++j)
      if (cnt[j] > 0) c.row(static_cast<Eigen::Index>(j)) = sum.row(static_cast<Eigen::Index>(j)) / static_cast<double>(cnt[j]);
    if (!changed && it > 0) break;
  }

  // Canonical order: lexicographic by coordinates.
  std::vector<std::size_t> order(kk);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double va = c(static_cast<Eigen::Index>(a), j), vb = c(static_cast<Eigen::Index>(b), j);
      if (va != vb) return va < vb;
    }
    return a < b;
  });
  Quantizer q;
  q.k = k;
  q.seed = seed;
  q.degenerate = kk < k;
  q.centroids.resize(static_cast<Eigen::Index>(kk), x.cols());
  for (std::size_t j = 0; j < kk; ++j) q.centroids.row(static_cast<Eigen::Index>(j)) = c.row(static_cast<Eigen::Index>(order[j]));
  return q;
}

}  // namespace icym2i
