#include <algorithm>
#include <cmath>

#include "icym2i/pid.hpp"

namespace icym2i {

namespace {

// q(y, x1) and q(y, x2) sums
void slice_sums(const DiscreteJoint& q, std::vector<double>& s1, std::vector<double>& s2) {
  s1.assign(q.ny() * q.n1(), 0.0);
  s2.assign(q.ny() * q.n2(), 0.0);
  for (std::size_t y = 0; y < q.ny(); ++y)
    for (std::size_t a = 0; a < q.n1(); ++a)
      for (std::size_t b = 0; b < q.n2(); ++b) {
        const double v = q(y, a, b);
        s1[y * q.n1() + a] += v;
        s2[y * q.n2() + b] += v;
      }
}

double rel_err(const std::vector<double>& s, const std::vector<double>& p) {
  double e = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > 0) e = std::max(e, std::abs(s[k] - p[k]) / p[k]);
  return e;
}

void check_shapes(const DiscreteJoint& q, const MarginalPair& t) {
  if (q.ny() != t.ny || q.n1() != t.n1 || q.n2() != t.n2)
    throw InvalidArgument("sinkhorn_project: joint and target alphabets differ");
}

}  // namespace

double relative_error_x1(const DiscreteJoint& q, const MarginalPair& t) {
  check_shapes(q, t);
  std::vector<double> s1, s2;
  slice_sums(q, s1, s2);
  return rel_err(s1, t.y_x1);
}

double relative_error_x2(const DiscreteJoint& q, const MarginalPair& t) {
  check_shapes(q, t);
  std::vector<double> s1, s2;
  slice_sums(q, s1, s2);
  return rel_err(s2, t.y_x2);
}

SinkhornResult sinkhorn_project(const DiscreteJoint& q_in, const MarginalPair& t, const SinkhornOptions& opt) {
  check_shapes(q_in, t);
  if (!(opt.atol > 0)) throw InvalidArgument("sinkhorn_project: atol must be positive");
  SinkhornResult r;
  r.q = q_in;
  DiscreteJoint& q = r.q;
  const std::size_t ny = q.ny(), n1 = q.n1(), n2 = q.n2();
  for (double v : q.prob())
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("sinkhorn_project: q must be finite and nonnegative");

  // Zero-mass targets: remove the corresponding support up front.
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) {
        if ((t.y_x1[y * n1 + a] <= 0 || t.y_x2[y * n2 + b] <= 0) && q(y, a, b) > 0) {
          q(y, a, b) = 0.0;
          ++r.zeroed_cells;
        }
      }

  std::vector<double> s1, s2;
  slice_sums(q, s1, s2);
  for (;;) {
    r.error_x1 = rel_err(s1, t.y_x1);
    r.error_x2 = rel_err(s2, t.y_x2);
    if (r.error_x1 <= opt.atol && r.error_x2 <= opt.atol) {
      r.converged = true;
      return r;
    }
    if (r.rounds >= opt.max_rounds) return r;
    ++r.rounds;

    // match (Y, X2)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t b = 0; b < n2; ++b) {
        const double s = s2[y * n2 + b];
        const double f = s > 0 ? t.y_x2[y * n2 + b] / s : 0.0;
        for (std::size_t a = 0; a < n1; ++a) q(y, a, b) *= f;
      }
    slice_sums(q, s1, s2);
    r.error_x1 = rel_err(s1, t.y_x1);
    if (r.error_x1 <= opt.atol) {
      r.error_x2 = rel_err(s2, t.y_x2);
      r.converged = r.error_x2 <= opt.atol;
      if (r.converged) return r;
    }

    // match (Y, X1)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t a = 0; a < n1; ++a) {
        const double s = s1[y * n1 + a];
        const double f = s > 0 ? t.y_x1[y * n1 + a] / s : 0.0;
        for (std::size_t b = 0; b < n2; ++b) q(y, a, b) *= f;
      }
    slice_sums(q, s1, s2);
    r.error_x2 = rel_err(s2, t.y_x2);
    if (r.error_x2 <= opt.atol) {
      r.error_x1 = rel_err(s1, t.y_x1);
      r.converged = r.error_x1 <= opt.atol;
      if (r.converged) return r;
    }
  }
}

}  // namespace icym2i
