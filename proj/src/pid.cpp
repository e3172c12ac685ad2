#include "icym2i/pid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace icym2i {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

double plogp(double v) { return v > 0 ? v * std::log2(v) : 0.0; }

std::vector<double> rows_sum(const std::vector<double>& t, std::size_t ny, std::size_t n) {
  std::vector<double> out(ny, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t b = 0; b < n; ++b) out[y] += t[y * n + b];
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kEmpiricalFull: return "empirical-full";
    case Provenance::kEmpiricalObserved: return "empirical-observed";
    case Provenance::kIpwCorrected: return "ipw-corrected";
    case Provenance::kModel: return "model";
  }
  return "?";
}

std::string_view to_string(PidArm a) {
  switch (a) {
    case PidArm::kOracle: return "oracle";
    case PidArm::kObserved: return "observed";
    case PidArm::kIcym2i: return "icym2i";
  }
  return "?";
}

// ---------------------------------------------------------------- MarginalPair

MarginalPair MarginalPair::from_joint(const DiscreteJoint& j, Provenance p) {
  MarginalPair m;
  m.ny = j.ny();
  m.n1 = j.n1();
  m.n2 = j.n2();
  m.y_x1 = j.y_x1();
  m.y_x2 = j.y_x2();
  m.provenance = p;
  return m;
}

std::vector<double> MarginalPair::y_from_x1() const { return rows_sum(y_x1, ny, n1); }
std::vector<double> MarginalPair::y_from_x2() const { return rows_sum(y_x2, ny, n2); }

double MarginalPair::y_discrepancy() const {
  auto a = y_from_x1(), b = y_from_x2();
  double d = 0.0;
  for (std::size_t y = 0; y < ny; ++y) d = std::max(d, std::abs(a[y] - b[y]));
  return d;
}

void MarginalPair::reconcile() {
  auto a = y_from_x1(), b = y_from_x2();
  for (std::size_t y = 0; y < ny; ++y) {
    const double target = 0.5 * (a[y] + b[y]);
    if (a[y] > 0)
      for (std::size_t k = 0; k < n1; ++k) y_x1[y * n1 + k] *= target / a[y];
    if (b[y] > 0)
      for (std::size_t k = 0; k < n2; ++k) y_x2[y * n2 + k] *= target / b[y];
  }
}

void MarginalPair::validate(double tol) const {
  if (ny == 0 || n1 == 0 || n2 == 0 || y_x1.size() != ny * n1 || y_x2.size() != ny * n2)
    throw InvalidArgument("MarginalPair: table shapes do not match alphabet sizes");
  for (double v : y_x1)
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("MarginalPair: negative or non-finite entry");
  for (double v : y_x2)
    if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("MarginalPair: negative or non-finite entry");
  const double s1 = std::accumulate(y_x1.begin(), y_x1.end(), 0.0);
  const double s2 = std::accumulate(y_x2.begin(), y_x2.end(), 0.0);
  if (std::abs(s1 - 1) > tol || std::abs(s2 - 1) > tol)
    throw InvalidArgument(strprintf("MarginalPair: tables sum to %.9g and %.9g", s1, s2));
  if (y_discrepancy() > tol)
    throw InvalidArgument(strprintf("MarginalPair: inconsistent Y-marginals (max gap %.3g)", y_discrepancy()));
}

// ---------------------------------------------------------------- data -> marginals

Binning bin_dataset(const Dataset& ds, const Quantizer* q1, const Quantizer* q2) {
  Binning b;
  auto one = [&](const ModalityMatrix& x, const Quantizer* q, std::vector<int>& out, std::size_t& nb) {
    out.resize(ds.size());
    if (q) {
      std::vector<double> row;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        auto r = x.row(i);
        row.assign(r.begin(), r.end());
        out[i] = q->assign(row);
      }
      nb = q->bins();
      return;
    }
    if (x.cols() != 1) throw InvalidArgument("bin_dataset: continuous modality needs a quantizer");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double v = x(i, 0);
      if (v != 0.0 && v != 1.0) throw InvalidArgument("bin_dataset: raw binning needs 0/1 features");
      out[i] = static_cast<int>(v);
    }
    nb = 2;
  };
  one(ds.x1, q1, b.b1, b.n1);
  one(ds.x2, q2, b.b2, b.n2);
  return b;
}

MarginalPair weighted_marginals(const Dataset& ds, std::span<const std::size_t> rows,
                                std::span<const double> weights, const Binning& bins, Provenance prov) {
  if (rows.empty()) throw InvalidArgument("weighted_marginals: empty row set");
  if (!weights.empty() && weights.size() != rows.size())
    throw InvalidArgument("weighted_marginals: one weight per row required");
  MarginalPair m;
  m.ny = 2;
  m.n1 = bins.n1;
  m.n2 = bins.n2;
  m.y_x1.assign(m.ny * m.n1, 0.0);
  m.y_x2.assign(m.ny * m.n2, 0.0);
  m.provenance = prov;
  double tot = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    const double w = weights.empty() ? 1.0 : weights[k];
    const std::size_t y = ds.y[r];
    m.y_x1[y * m.n1 + static_cast<std::size_t>(bins.b1[r])] += w;
    m.y_x2[y * m.n2 + static_cast<std::size_t>(bins.b2[r])] += w;
    tot += w;
  }
  if (!(tot > 0)) throw InvalidArgument("weighted_marginals: zero total weight");
  for (double& v : m.y_x1) v /= tot;
  for (double& v : m.y_x2) v /= tot;
  return m;
}

MarginalPair marginals_from_data(const Dataset& ds, PidArm arm, const PropensityModel* propensity,
                                 const Binning& bins) {
  switch (arm) {
    case PidArm::kOracle: {
      auto rows = ds.all_rows();
      return weighted_marginals(ds, rows, {}, bins, Provenance::kEmpiricalFull);
    }
    case PidArm::kObserved: {
      auto rows = ds.complete_rows();
      if (rows.empty()) throw InvalidArgument("marginals_from_data: no complete cases");
      return weighted_marginals(ds, rows, {}, bins, Provenance::kEmpiricalObserved);
    }
    case PidArm::kIcym2i: {
      if (!propensity) throw InvalidArgument("marginals_from_data: icym2i arm requires a propensity model");
      auto rows = ds.complete_rows();
      if (rows.empty()) throw InvalidArgument("marginals_from_data: no complete cases");
      auto w = ipw_weights(*propensity, ds, rows);
      return weighted_marginals(ds, rows, w.w, bins, Provenance::kIpwCorrected);
    }
  }
  throw InvalidArgument("marginals_from_data: unknown arm");
}

MarginalPair model_marginals(std::span<const int> b1, std::span<const int> b2, std::size_t n1, std::size_t n2,
                             std::span<const double> p1_x1, std::span<const double> p1_x2,
                             std::span<const double> weights, Provenance prov) {
  const std::size_t n = b1.size();
  if (n == 0) throw InvalidArgument("model_marginals: no rows");
  if (b2.size() != n || p1_x1.size() != n || p1_x2.size() != n || (!weights.empty() && weights.size() != n))
    throw InvalidArgument("model_marginals: per-row inputs differ in length");
  MarginalPair m;
  m.ny = 2;
  m.n1 = n1;
  m.n2 = n2;
  m.provenance = prov;
  m.y_x1.assign(2 * n1, 0.0);
  m.y_x2.assign(2 * n2, 0.0);
  double tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto a = static_cast<std::size_t>(b1[i]);
    const auto b = static_cast<std::size_t>(b2[i]);
    if (a >= n1 || b >= n2) throw InvalidArgument("model_marginals: bin out of range");
    m.y_x1[n1 + a] += w * p1_x1[i];
    m.y_x1[a] += w * (1.0 - p1_x1[i]);
    m.y_x2[n2 + b] += w * p1_x2[i];
    m.y_x2[b] += w * (1.0 - p1_x2[i]);
    tot += w;
  }
  if (!(tot > 0)) throw InvalidArgument("model_marginals: zero total weight");
  for (double& v : m.y_x1) v /= tot;
  for (double& v : m.y_x2) v /= tot;
  if (m.y_discrepancy() > 1e-6) m.reconciled = true;
  m.reconcile();
  return m;
}

// ---------------------------------------------------------------- bounds at q*

PIDResult pid_from_q(const DiscreteJoint& q, double total_mi) {
  PIDResult r;
  r.q = q;
  r.total_mi = total_mi;
  r.unique1 = cmi_y_x1_given_x2(q);
  r.unique2 = cmi_y_x2_given_x1(q);
  r.shared = coinformation(q);
  r.min_mi = mi_y_x1x2(q);
  r.complementary = total_mi - r.min_mi;
  r.objective_value = r.min_mi;
  r.residual = std::abs(total_mi - (r.unique1 + r.unique2 + r.shared + r.complementary));
  return r;
}

// ---------------------------------------------------------------- oracle

namespace {

double three_way_mi(const DiscreteJoint& q) { return mi_y_x1x2(q); }

// Binary X1, X2: per y the coupling has one free parameter t_y = q(y, 0, 0).
struct BinaryCoupling {
  std::size_t ny;
  std::vector<double> A, B, P, lo, hi;

  explicit BinaryCoupling(const MarginalPair& m) : ny(m.ny) {
    auto py = m.y_from_x1();
    for (std::size_t y = 0; y < ny; ++y) {
      A.push_back(m.y_x1[y * 2 + 0]);
      B.push_back(m.y_x2[y * 2 + 0]);
      P.push_back(py[y]);
      lo.push_back(std::max(0.0, A[y] + B[y] - P[y]));
      hi.push_back(std::min(A[y], B[y]));
      if (hi[y] < lo[y]) hi[y] = lo[y];
    }
  }

  std::array<double, 4> cells(std::size_t y, double t) const {
    return {t, std::max(0.0, A[y] - t), std::max(0.0, B[y] - t), std::max(0.0, P[y] - A[y] - B[y] + t)};
  }

  DiscreteJoint joint(const std::vector<double>& t) const {
    DiscreteJoint q(ny, 2, 2);
    for (std::size_t y = 0; y < ny; ++y) {
      auto c = cells(y, t[y]);
      q(y, 0, 0) = c[0];
      q(y, 0, 1) = c[1];
      q(y, 1, 0) = c[2];
      q(y, 1, 1) = c[3];
    }
    return q;
  }

  // I_q(Y:(X1,X2)) minus the constant H(Y).
  double objective(const std::vector<double>& t) const {
    double hx[4] = {0, 0, 0, 0};
    double neg_hyx = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      auto c = cells(y, t[y]);
      for (int k = 0; k < 4; ++k) {
        hx[k] += c[static_cast<std::size_t>(k)];
        neg_hyx += plogp(c[static_cast<std::size_t>(k)]);
      }
    }
    double h = 0.0;
    for (double v : hx) h -= plogp(v);
    return h + neg_hyx;
  }
};

DiscreteJoint binary_oracle(const MarginalPair& m, const OracleOptions& opt) {
  BinaryCoupling bc(m);
  const int G = std::max(2, opt.grid_points);
  std::vector<double> best_t(bc.ny), t(bc.ny);
  double best = std::numeric_limits<double>::infinity();
  auto grid_val = [&](std::size_t y, int i) {
    return bc.lo[y] + (bc.hi[y] - bc.lo[y]) * static_cast<double>(i) / static_cast<double>(G - 1);
  };
  if (bc.ny == 1) {
    for (int i = 0; i < G; ++i) {
      t[0] = grid_val(0, i);
      const double v = bc.objective(t);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
  } else {
    // ny == 2: full grid; cell tables per axis precomputed.
    std::vector<std::array<double, 4>> c0(static_cast<std::size_t>(G)), c1(static_cast<std::size_t>(G));
    std::vector<double> h0(static_cast<std::size_t>(G)), h1(static_cast<std::size_t>(G));
    for (int i = 0; i < G; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      c0[ii] = bc.cells(0, grid_val(0, i));
      c1[ii] = bc.cells(1, grid_val(1, i));
      h0[ii] = h1[ii] = 0.0;
      for (int k = 0; k < 4; ++k) {
        h0[ii] += plogp(c0[ii][static_cast<std::size_t>(k)]);
        h1[ii] += plogp(c1[ii][static_cast<std::size_t>(k)]);
      }
    }
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < c0.size(); ++i)
      for (std::size_t j = 0; j < c1.size(); ++j) {
        double v = h0[i] + h1[j];
        for (std::size_t k = 0; k < 4; ++k) v -= plogp(c0[i][k] + c1[j][k]);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    best_t = {grid_val(0, static_cast<int>(bi)), grid_val(1, static_cast<int>(bj))};
  }

  // Pattern-search refinement (the objective is convex in t).
  std::vector<double> step(bc.ny);
  for (std::size_t y = 0; y < bc.ny; ++y) step[y] = (bc.hi[y] - bc.lo[y]) / static_cast<double>(G - 1);
  t = best_t;
  for (int guard = 0; guard < 100000; ++guard) {
    bool improved = false;
    for (std::size_t y = 0; y < bc.ny; ++y) {
      for (double dir : {-1.0, 1.0}) {
        std::vector<double> cand = t;
        cand[y] = std::clamp(t[y] + dir * step[y], bc.lo[y], bc.hi[y]);
        const double v = bc.objective(cand);
        if (v < best - 1e-16) {
          best = v;
          t = cand;
          improved = true;
        }
      }
    }
    if (!improved) {
      bool done = true;
      for (auto& s : step) {
        s *= 0.5;
        if (s >= opt.refine_tol) done = false;
      }
      if (done) break;
    }
  }
  return bc.joint(t);
}

// Euclidean projection of an m x n block onto {X 1 = r, X^T 1 = c, X >= 0} by Dykstra.
void project_transport(std::vector<double>& x, std::size_t m, std::size_t n, const double* r, const double* c) {
  auto affine = [&](std::vector<double>& z) {
    std::vector<double> rr(m, 0.0), cc(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        rr[i] += z[i * n + j];
        cc[j] += z[i * n + j];
      }
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      rr[i] = r[i] - rr[i];
      s += rr[i];
    }
    for (std::size_t j = 0; j < n; ++j) cc[j] = c[j] - cc[j];
    const double A = s / (2.0 * static_cast<double>(n));
    const double B = s / (2.0 * static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        z[i * n + j] += (rr[i] - B) / static_cast<double>(n) + (cc[j] - A) / static_cast<double>(m);
  };
  std::vector<double> p(x.size(), 0.0), q(x.size(), 0.0), y(x.size()), prev;
  for (int it = 0; it < 5000; ++it) {
    prev = x;
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] + p[k];
    affine(y);
    for (std::size_t k = 0; k < x.size(); ++k) p[k] = x[k] + p[k] - y[k];
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double v = y[k] + q[k];
      x[k] = std::max(0.0, v);
      q[k] = v - x[k];
    }
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d = std::max(d, std::abs(x[k] - prev[k]));
    if (d < 1e-15) break;
  }
}

void project_polytope(DiscreteJoint& q, const MarginalPair& t) {
  const std::size_t n1 = q.n1(), n2 = q.n2();
  std::vector<double> block(n1 * n2);
  for (std::size_t y = 0; y < q.ny(); ++y) {
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) block[a * n2 + b] = q(y, a, b);
    project_transport(block, n1, n2, &t.y_x1[y * n1], &t.y_x2[y * n2]);
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) q(y, a, b) = block[a * n2 + b];
  }
}

std::vector<double> mi_gradient(const DiscreteJoint& q) {
  auto xx = q.x1_x2();
  std::vector<double> g(q.cells());
  for (std::size_t y = 0; y < q.ny(); ++y)
    for (std::size_t a = 0; a < q.n1(); ++a)
      for (std::size_t b = 0; b < q.n2(); ++b)
        g[q.index(y, a, b)] =
            std::log2(std::max(q(y, a, b), 1e-12)) - std::log2(std::max(xx[a * q.n2() + b], 1e-12));
  return g;
}

DiscreteJoint pgd_oracle(const MarginalPair& m, const OracleOptions& opt) {
  std::mt19937_64 rng(derive_seed(opt.seed, {"pid-oracle"}));
  std::uniform_real_distribution<double> u(0.05, 1.0);
  auto py = m.y_from_x1();
  DiscreteJoint best_q;
  double best = std::numeric_limits<double>::infinity();
  for (int rs = 0; rs < std::max(1, opt.restarts); ++rs) {
    DiscreteJoint q(m.ny, m.n1, m.n2);
    for (std::size_t y = 0; y < m.ny; ++y)
      for (std::size_t a = 0; a < m.n1; ++a)
        for (std::size_t b = 0; b < m.n2; ++b)
          q(y, a, b) = rs == 0 ? (py[y] > 0 ? m.y_x1[y * m.n1 + a] * m.y_x2[y * m.n2 + b] / py[y] : 0.0) : u(rng);
    if (rs > 0) q = sinkhorn_project(q, m, {1e-12, 20000}).q;
    project_polytope(q, m);
    double f = three_way_mi(q);
    double eta = 0.1;
    for (int it = 0; it < opt.pgd_iterations; ++it) {
      auto g = mi_gradient(q);
      bool accepted = false;
      while (eta > 1e-14) {
        DiscreteJoint cand = q;
        for (std::size_t k = 0; k < cand.cells(); ++k) cand.prob()[k] -= eta * g[k];
        project_polytope(cand, m);
        const double fc = three_way_mi(cand);
        if (fc < f) {
          const double gain = f - fc;
          q = std::move(cand);
          f = fc;
          eta *= 2.0;
          accepted = true;
          if (gain < 1e-14) it = opt.pgd_iterations;
          break;
        }
        eta *= 0.5;
      }
      if (!accepted) break;
    }
    if (f < best) {
      best = f;
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace

DiscreteJoint oracle_minimizer(const MarginalPair& m_in, const OracleOptions& opt, std::string* method) {
  m_in.validate(1e-6);
  if (m_in.ny * m_in.n1 * m_in.n2 > 1024)
    throw InvalidArgument("pid_oracle: alphabet too large for the exact solver (limit 1024 cells)");
  if (m_in.n1 == 2 && m_in.n2 == 2 && m_in.ny <= 2) {
    if (method) *method = "oracle-grid";
    return binary_oracle(m_in, opt);
  }
  if (method) *method = "oracle-pgd";
  return pgd_oracle(m_in, opt);
}

PIDResult pid_oracle(const MarginalPair& m, double total_mi, const OracleOptions& opt) {
  std::string method;
  DiscreteJoint q = oracle_minimizer(m, opt, &method);
  PIDResult r = pid_from_q(q, total_mi);
  r.solver = method;
  r.converged = true;
  r.marginal_error = std::max(relative_error_x1(q, m), relative_error_x2(q, m));
  return r;
}

PIDResult pid_oracle(const MarginalPair& m, const DiscreteJoint& full_joint, const OracleOptions& opt) {
  return pid_oracle(m, mi_y_x1x2(full_joint), opt);
}

// ---------------------------------------------------------------- estimator

DiscreteJoint QParametrization::joint() const {
  DiscreteJoint q(ny, n1, n2);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) mx = std::max(mx, f1[a * ny + y] * f2[b * ny + y]);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) q(y, a, b) = std::exp(f1[a * ny + y] * f2[b * ny + y] - mx);
  q.normalize();
  return q;
}

QParametrization QParametrization::from_marginals(const MarginalPair& m, std::uint64_t seed, double jitter) {
  QParametrization th;
  th.ny = m.ny;
  th.n1 = m.n1;
  th.n2 = m.n2;
  th.f1.assign(m.n1 * m.ny, 0.0);
  th.f2.assign(m.n2 * m.ny, 0.0);
  std::mt19937_64 rng(derive_seed(seed, {"q-init"}));
  std::uniform_real_distribution<double> u(-jitter, jitter);
  auto fill = [&](const std::vector<double>& t, std::size_t n, std::vector<double>& f) {
    for (std::size_t b = 0; b < n; ++b) {
      double col = 0.0;
      for (std::size_t y = 0; y < m.ny; ++y) col += t[y * n + b];
      for (std::size_t y = 0; y < m.ny; ++y) {
        const double c = col > 0 ? t[y * n + b] / col : 1.0 / static_cast<double>(m.ny);
        f[b * m.ny + y] = std::log(std::max(c, 1e-9)) + (jitter > 0 ? u(rng) : 0.0);
      }
    }
  };
  fill(m.y_x1, m.n1, th.f1);
  fill(m.y_x2, m.n2, th.f2);
  return th;
}

ObjectiveEval unrolled_objective(const QParametrization& th, const MarginalPair& t, int max_rounds, double atol,
                                 bool want_gradient) {
  const std::size_t ny = th.ny, n1 = th.n1, n2 = th.n2;
  if (t.ny != ny || t.n1 != n1 || t.n2 != n2) throw InvalidArgument("unrolled_objective: shape mismatch");
  const std::size_t N = ny * n1 * n2;
  auto idx = [&](std::size_t y, std::size_t a, std::size_t b) { return (y * n1 + a) * n2 + b; };

  // q0 = exp(L - max L) on the support allowed by the targets
  std::vector<double> L(N), q(N);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) {
        L[idx(y, a, b)] = th.f1[a * ny + y] * th.f2[b * ny + y];
        mx = std::max(mx, L[idx(y, a, b)]);
      }
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) {
        const bool live = t.y_x1[y * n1 + a] > 0 && t.y_x2[y * n2 + b] > 0;
        q[idx(y, a, b)] = live ? std::exp(L[idx(y, a, b)] - mx) : 0.0;
      }
  const std::vector<double> q0 = q;

  struct Step {
    bool match_x2;
    std::vector<double> before;
    std::vector<double> sums;
  };
  std::vector<Step> tape;
  std::vector<double> s1(ny * n1), s2(ny * n2);
  auto sums = [&]() {
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t b = 0; b < n2; ++b) {
          s1[y * n1 + a] += q[idx(y, a, b)];
          s2[y * n2 + b] += q[idx(y, a, b)];
        }
  };
  auto err = [&](const std::vector<double>& s, const std::vector<double>& p) {
    double e = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[k] > 0) e = std::max(e, std::abs(s[k] - p[k]) / p[k]);
    return e;
  };
  // Mass is normalized before comparing, matching the scale-free objective.
  auto scaled_err = [&](bool x1) {
    double z = 0.0;
    for (double v : q) z += v;
    std::vector<double> s = x1 ? s1 : s2;
    for (double& v : s) v /= z;
    return err(s, x1 ? t.y_x1 : t.y_x2);
  };

  ObjectiveEval ev;
  sums();
  for (;;) {
    if (scaled_err(true) <= atol && scaled_err(false) <= atol) break;
    if (ev.rounds >= max_rounds) break;
    ++ev.rounds;
    tape.push_back({true, q, s2});
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t b = 0; b < n2; ++b) {
        const double s = s2[y * n2 + b];
        const double f = s > 0 ? t.y_x2[y * n2 + b] / s : 0.0;
        for (std::size_t a = 0; a < n1; ++a) q[idx(y, a, b)] *= f;
      }
    sums();
    if (err(s1, t.y_x1) <= atol) break;
    tape.push_back({false, q, s1});
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t a = 0; a < n1; ++a) {
        const double s = s1[y * n1 + a];
        const double f = s > 0 ? t.y_x1[y * n1 + a] / s : 0.0;
        for (std::size_t b = 0; b < n2; ++b) q[idx(y, a, b)] *= f;
      }
    sums();
    if (err(s2, t.y_x2) <= atol) break;
  }

  double Z = 0.0;
  for (double v : q) Z += v;
  if (!(Z > 0) || !std::isfinite(Z)) throw NumericalError("unrolled_objective: projected table has no mass");
  std::vector<double> qh(N);
  for (std::size_t k = 0; k < N; ++k) qh[k] = q[k] / Z;
  DiscreteJoint J(ny, n1, n2, qh);
  ev.value = mi_y_x1x2(J);
  {
    std::vector<double> e1(ny * n1, 0.0), e2(ny * n2, 0.0);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t b = 0; b < n2; ++b) {
          e1[y * n1 + a] += qh[idx(y, a, b)];
          e2[y * n2 + b] += qh[idx(y, a, b)];
        }
    ev.error = std::max(err(e1, t.y_x1), err(e2, t.y_x2));
  }
  if (!want_gradient) return ev;

  // dI/dqh = log qh(y,a,b) - log qh(y) - log qh(a,b)  (bits; additive constants cancel below)
  auto py = J.marginal_y();
  auto pab = J.x1_x2();
  std::vector<double> g(N, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) {
        const std::size_t k = idx(y, a, b);
        if (qh[k] > 0) g[k] = (std::log(qh[k]) - std::log(py[y]) - std::log(pab[a * n2 + b])) / kLn2;
      }
  // through the normalization
  double gq = 0.0;
  for (std::size_t k = 0; k < N; ++k) gq += g[k] * qh[k];
  for (std::size_t k = 0; k < N; ++k) g[k] = (g[k] - gq) / Z;

  // through the recorded scaling steps
  std::vector<double> gb(N);
  for (std::size_t s = tape.size(); s-- > 0;) {
    const Step& st = tape[s];
    const auto& qb = st.before;
    if (st.match_x2) {
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t b = 0; b < n2; ++b) {
          const double S = st.sums[y * n2 + b];
          if (!(S > 0)) {
            for (std::size_t a = 0; a < n1; ++a) gb[idx(y, a, b)] = 0.0;
            continue;
          }
          const double r = t.y_x2[y * n2 + b];
          double dot = 0.0;
          for (std::size_t a = 0; a < n1; ++a) dot += g[idx(y, a, b)] * qb[idx(y, a, b)];
          for (std::size_t a = 0; a < n1; ++a) gb[idx(y, a, b)] = (r / S) * (g[idx(y, a, b)] - dot / S);
        }
    } else {
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t a = 0; a < n1; ++a) {
          const double S = st.sums[y * n1 + a];
          if (!(S > 0)) {
            for (std::size_t b = 0; b < n2; ++b) gb[idx(y, a, b)] = 0.0;
            continue;
          }
          const double r = t.y_x1[y * n1 + a];
          double dot = 0.0;
          for (std::size_t b = 0; b < n2; ++b) dot += g[idx(y, a, b)] * qb[idx(y, a, b)];
          for (std::size_t b = 0; b < n2; ++b) gb[idx(y, a, b)] = (r / S) * (g[idx(y, a, b)] - dot / S);
        }
    }
    g.swap(gb);
  }

  // q0 = exp(L - m): dL = g * q0; L = f1 * f2
  ev.grad_f1.assign(th.f1.size(), 0.0);
  ev.grad_f2.assign(th.f2.size(), 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) {
        const double dl = g[idx(y, a, b)] * q0[idx(y, a, b)];
        ev.grad_f1[a * ny + y] += dl * th.f2[b * ny + y];
        ev.grad_f2[b * ny + y] += dl * th.f1[a * ny + y];
      }
  return ev;
}

PIDResult solve_pid(const MarginalPair& targets, double total_mi, const SolverOptions& opt) {
  targets.validate(1e-6);
  QParametrization th = QParametrization::from_marginals(targets, opt.seed, opt.jitter);
  const std::size_t P1 = th.f1.size(), P = P1 + th.f2.size();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  QParametrization best_th = th;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_hist;
  double prev = std::numeric_limits<double>::infinity();
  int increases = 0, steps = 0;
  bool converged = false;
  for (int step = 0; step < opt.max_steps; ++step) {
    ObjectiveEval ev = unrolled_objective(th, targets, opt.unrolled_rounds, opt.final_projection.atol, true);
    steps = step + 1;
    if (!std::isfinite(ev.value)) throw NumericalError("solve_pid: non-finite objective");
    increases = ev.value > prev ? increases + 1 : 0;
    prev = ev.value;
    if (increases >= opt.abort_window)
      throw NumericalError(strprintf("solve_pid: objective increased for %d consecutive steps (step %d, value %.9g, "
                                     "best %.9g, marginal error %.3g)",
                                     increases, step, ev.value, best, ev.error));
    if (ev.value < best) {
      best = ev.value;
      best_th = th;
    }
    best_hist.push_back(best);
    if (step >= opt.window &&
        best_hist[static_cast<std::size_t>(step - opt.window)] - best < opt.tolerance) {
      converged = true;
      break;
    }
    const double c1 = 1 - std::pow(b1, step + 1), c2 = 1 - std::pow(b2, step + 1);
    for (std::size_t k = 0; k < P; ++k) {
      const double gk = k < P1 ? ev.grad_f1[k] : ev.grad_f2[k - P1];
      m[k] = b1 * m[k] + (1 - b1) * gk;
      v[k] = b2 * v[k] + (1 - b2) * gk * gk;
      const double d = opt.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      if (k < P1) th.f1[k] -= d;
      else th.f2[k - P1] -= d;
    }
  }

  SinkhornResult sk = sinkhorn_project(best_th.joint(), targets, opt.final_projection);
  DiscreteJoint q = sk.q;
  q.normalize();
  PIDResult r = pid_from_q(q, total_mi);
  r.solver = "sinkhorn-gd";
  r.iterations = steps;
  r.converged = converged;
  r.sk_rounds = sk.rounds;
  r.sk_converged = sk.converged;
  r.marginal_error = std::max(relative_error_x1(q, targets), relative_error_x2(q, targets));
  r.reconciled = targets.reconciled;
  if (!sk.converged) r.warnings.push_back("final projection did not converge");
  if (sk.zeroed_cells) r.warnings.push_back(strprintf("%zu cells zeroed by zero targets", sk.zeroed_cells));
  if (targets.reconciled) r.warnings.push_back("Y-marginals of the two targets were averaged");
  return r;
}

PIDResult pid_icym2i(const PidInputs& in, const SolverOptions& opt) {
  const std::size_t n = in.b1.size();
  if (n == 0) throw InvalidArgument("pid_icym2i: no rows");
  if (in.b2.size() != n || in.p_x1.size() != n || in.p_x2.size() != n || in.p_x12.size() != n)
    throw InvalidArgument("pid_icym2i: per-row inputs differ in length");
  MarginalPair targets = model_marginals(in.b1, in.b2, in.n1, in.n2, in.p_x1, in.p_x2, in.ipw, in.provenance);
  std::vector<double> ones;
  std::span<const double> sw = in.stabilized;
  if (sw.empty()) {
    ones.assign(n, 1.0);
    sw = ones;
  }
  IpwMiDiagnostics d;
  const double total = ipw_mutual_info_binary(in.p_x12, sw, {}, &d);
  PIDResult r = solve_pid(targets, total, opt);
  if (d.clamped) r.warnings.push_back(strprintf("%zu probabilities clamped in the corrected MI", d.clamped));
  return r;
}

}  // namespace icym2i
