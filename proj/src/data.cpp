#include "icym2i/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace icym2i {

std::string strprintf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int len = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string out(static_cast<std::size_t>(std::max(len, 0)), '\0');
  std::vsnprintf(out.data(), out.size() + 1, fmt, ap2);
  va_end(ap2);
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidArgument("unknown split tag '" + std::string(s) + "'");
}

ModalityMatrix::ModalityMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

ModalityMatrix::ModalityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw InvalidArgument("ModalityMatrix: size mismatch");
}

MissingnessMask MissingnessMask::all_observed(std::size_t n) {
  return {std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 0),
          std::vector<std::uint8_t>(n, 0)};
}

void Dataset::validate() const {
  const std::size_t n = y.size();
  if (x1.rows() != n || x2.rows() != n || mask.m1.size() != n || mask.m2.size() != n ||
      mask.my.size() != n || split.size() != n) {
    throw InvalidArgument("Dataset: inconsistent row counts");
  }
  if (x1.cols() == 0 || x2.cols() == 0) throw InvalidArgument("Dataset: empty modality");
  auto check01 = [](const std::vector<std::uint8_t>& v, const char* what) {
    for (auto f : v)
      if (f > 1) throw InvalidArgument(std::string("Dataset: non-binary ") + what);
  };
  check01(y, "label");
  check01(mask.m1, "m1");
  check01(mask.m2, "m2");
  check01(mask.my, "my");
  for (double v : x1.values())
    if (!std::isfinite(v)) throw InvalidArgument("Dataset: non-finite x1 entry");
  for (double v : x2.values())
    if (!std::isfinite(v)) throw InvalidArgument("Dataset: non-finite x2 entry");
}

std::vector<std::size_t> Dataset::all_rows() const {
  std::vector<std::size_t> r(size());
  std::iota(r.begin(), r.end(), std::size_t{0});
  return r;
}

std::vector<std::size_t> Dataset::rows(Split s) const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < size(); ++i)
    if (split[i] == s) r.push_back(i);
  return r;
}

std::vector<std::size_t> Dataset::complete_rows() const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < size(); ++i)
    if (mask.complete(i)) r.push_back(i);
  return r;
}

std::vector<std::size_t> Dataset::complete_rows(Split s) const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < size(); ++i)
    if (split[i] == s && mask.complete(i)) r.push_back(i);
  return r;
}

std::string_view to_string(Gate g) {
  switch (g) {
    case Gate::kAnd: return "AND";
    case Gate::kOr: return "OR";
    case Gate::kXor: return "XOR";
  }
  return "?";
}

Gate gate_from_string(std::string_view s) {
  auto l = lower(s);
  if (l == "and") return Gate::kAnd;
  if (l == "or") return Gate::kOr;
  if (l == "xor") return Gate::kXor;
  throw InvalidArgument("unknown gate '" + std::string(s) + "'");
}

std::uint8_t apply_gate(Gate g, std::uint8_t a, std::uint8_t b) {
  switch (g) {
    case Gate::kAnd: return a & b;
    case Gate::kOr: return a | b;
    case Gate::kXor: return a ^ b;
  }
  return 0;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, {"split"}));
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  std::vector<Split> split(n, Split::test);
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train)
      split[perm[k]] = Split::train;
    else if (k < n_train + n_val)
      split[perm[k]] = Split::val;
  }
  return split;
}

Dataset generate_logic_gate(Gate gate, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("generate_logic_gate: n must be >= 1");
  Dataset ds;
  ds.seed = seed;
  ds.x1 = ModalityMatrix(n, 1);
  ds.x2 = ModalityMatrix(n, 1);
  ds.y.resize(n);
  std::mt19937_64 rng(derive_seed(seed, {"logic-gate"}));
  std::bernoulli_distribution bit(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t a = bit(rng) ? 1 : 0;
    std::uint8_t b = bit(rng) ? 1 : 0;
    ds.x1(i, 0) = a;
    ds.x2(i, 0) = b;
    ds.y[i] = apply_gate(gate, a, b);
  }
  ds.mask = MissingnessMask::all_observed(n);
  ds.split = assign_splits(n, seed);
  return ds;
}

namespace {

struct Mixture {
  std::vector<double> centres;  // clusters x dim
  std::size_t dim;
  std::size_t clusters;
};

Mixture draw_mixture(std::mt19937_64& rng, std::size_t dim, std::size_t clusters, double spread) {
  Mixture m{std::vector<double>(dim * clusters), dim, clusters};
  std::normal_distribution<double> nd(0.0, spread);
  for (auto& c : m.centres) c = nd(rng);
  return m;
}

void sample_latent(std::mt19937_64& rng, const Mixture& m, double sd, double* out) {
  std::uniform_int_distribution<std::size_t> pick(0, m.clusters - 1);
  std::normal_distribution<double> nd(0.0, sd);
  std::size_t c = pick(rng);
  for (std::size_t d = 0; d < m.dim; ++d) out[d] = m.centres[c * m.dim + d] + nd(rng);
}

}  // namespace

Dataset generate_clustered_latent(const ClusteredLatentSpec& spec) {
  if (!(spec.p1 >= 0.0 && spec.p1 <= 1.0 && spec.p2 >= 0.0 && spec.p2 <= 1.0) ||
      spec.p1 + spec.p2 > 1.0 + 1e-12) {
    throw InvalidArgument("generate_clustered_latent: need p1, p2 in [0,1] and p1 + p2 <= 1");
  }
  if (spec.n < 1 || spec.latent_dim < 1 || spec.clusters < 1)
    throw InvalidArgument("generate_clustered_latent: n, latent_dim and clusters must be >= 1");
  const std::size_t n = spec.n;
  const std::size_t d = spec.latent_dim;
  std::mt19937_64 rng(derive_seed(spec.seed, {"clustered-latent"}));
  Mixture mix1 = draw_mixture(rng, d, spec.clusters, spec.cluster_spread);
  Mixture mix2 = draw_mixture(rng, d, spec.clusters, spec.cluster_spread);
  Mixture mixc = draw_mixture(rng, d, spec.clusters, spec.cluster_spread);

  Dataset ds;
  ds.seed = spec.seed;
  ds.x1 = ModalityMatrix(n, 2 * d);
  ds.x2 = ModalityMatrix(n, 2 * d);
  ds.y.resize(n);
  std::vector<double> z1(d), z2(d), zc(d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double pc = std::max(0.0, 1.0 - spec.p1 - spec.p2);
  for (std::size_t i = 0; i < n; ++i) {
    sample_latent(rng, mix1, spec.within_sd, z1.data());
    sample_latent(rng, mix2, spec.within_sd, z2.data());
    sample_latent(rng, mixc, spec.within_sd, zc.data());
    double m1 = std::accumulate(z1.begin(), z1.end(), 0.0) / static_cast<double>(d);
    double m2 = std::accumulate(z2.begin(), z2.end(), 0.0) / static_cast<double>(d);
    double mc = std::accumulate(zc.begin(), zc.end(), 0.0) / static_cast<double>(d);
    for (std::size_t k = 0; k < d; ++k) {
      ds.x1(i, k) = zc[k];
      ds.x1(i, d + k) = z1[k];
      ds.x2(i, k) = zc[k];
      ds.x2(i, d + k) = z2[k];
    }
    double p = sigmoid(spec.p1 * m1 + spec.p2 * m2 + pc * mc);
    ds.y[i] = unif(rng) < p ? 1 : 0;
  }
  ds.mask = MissingnessMask::all_observed(n);
  ds.split = assign_splits(n, spec.seed);
  return ds;
}

std::string_view to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::kMcar: return "MCAR";
    case MechanismKind::kMar: return "MAR";
    case MechanismKind::kMnar: return "MNAR";
  }
  return "?";
}

std::string_view to_string(MaskTarget t) {
  switch (t) {
    case MaskTarget::kX2AndY: return "x2_and_y";
    case MaskTarget::kX2Only: return "x2_only";
    case MaskTarget::kYOnly: return "y_only";
  }
  return "?";
}

MechanismKind mechanism_kind_from_string(std::string_view s) {
  auto l = lower(s);
  if (l == "mcar") return MechanismKind::kMcar;
  if (l == "mar") return MechanismKind::kMar;
  if (l == "mnar") return MechanismKind::kMnar;
  throw InvalidArgument("unknown mechanism kind '" + std::string(s) + "'");
}

MaskTarget mask_target_from_string(std::string_view s) {
  if (s == "x2_and_y") return MaskTarget::kX2AndY;
  if (s == "x2_only") return MaskTarget::kX2Only;
  if (s == "y_only") return MaskTarget::kYOnly;
  throw InvalidArgument("unknown mask target '" + std::string(s) + "'");
}

MechanismSpec MechanismSpec::mcar(double rate, MaskTarget target) {
  MechanismSpec s;
  s.kind = MechanismKind::kMcar;
  s.target = target;
  s.rate = rate;
  return s;
}

MechanismSpec MechanismSpec::binary(MechanismKind kind, double p0, double p1, MaskTarget target) {
  if (!(p0 > 0 && p0 < 1 && p1 > 0 && p1 < 1))
    throw InvalidArgument("MechanismSpec::binary: probabilities must lie in (0, 1)");
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  MechanismSpec s;
  s.kind = kind;
  s.target = target;
  s.intercept = logit(p0);
  s.coefficients = {logit(p1) - logit(p0)};
  return s;
}

void MechanismSpec::validate() const {
  if (!(floor > 0.0 && floor <= 0.5)) throw InvalidArgument("MechanismSpec: floor must be in (0, 0.5]");
  if (rate && !(*rate >= 0.0 && *rate < 1.0))
    throw InvalidArgument("MechanismSpec: rate must be in [0, 1)");
  if (kind == MechanismKind::kMcar) {
    if (!rate) throw InvalidArgument("MechanismSpec: MCAR requires a rate");
    if (!coefficients.empty()) throw InvalidArgument("MechanismSpec: MCAR takes no coefficients");
  } else if (coefficients.empty()) {
    throw InvalidArgument("MechanismSpec: MAR/MNAR require coefficients");
  }
}

namespace {

/// Driver features for the logistic mechanism, per row.
std::vector<double> driver(const Dataset& ds, const MechanismSpec& spec, std::size_t i) {
  std::vector<double> v;
  if (spec.kind == MechanismKind::kMar) {
    auto r1 = ds.x1.row(i);
    v.assign(r1.begin(), r1.end());
    if (spec.target == MaskTarget::kYOnly) {
      auto r2 = ds.x2.row(i);
      v.insert(v.end(), r2.begin(), r2.end());
    }
  } else if (spec.kind == MechanismKind::kMnar) {
    if (spec.target == MaskTarget::kYOnly) {
      v.push_back(ds.y[i]);
    } else {
      auto r2 = ds.x2.row(i);
      v.assign(r2.begin(), r2.end());
    }
  }
  return v;
}

std::vector<double> linear_scores(const Dataset& ds, const MechanismSpec& spec) {
  std::vector<double> eta(ds.size(), 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto v = driver(ds, spec, i);
    if (v.size() != spec.coefficients.size()) {
      throw InvalidArgument(strprintf("MechanismSpec: %zu coefficients for %zu driver features",
                                      spec.coefficients.size(), v.size()));
    }
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += spec.coefficients[k] * v[k];
    eta[i] = s;
  }
  return eta;
}

double calibrate_intercept(const std::vector<double>& eta, double rate) {
  auto mean_prob = [&](double b) {
    double s = 0.0;
    for (double e : eta) s += sigmoid(b + e);
    return s / static_cast<double>(eta.size());
  };
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mean_prob(mid) < rate)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> missingness_probabilities(const Dataset& ds, const MechanismSpec& spec) {
  spec.validate();
  if (spec.kind == MechanismKind::kMcar) return std::vector<double>(ds.size(), *spec.rate);
  auto eta = linear_scores(ds, spec);
  double b = spec.rate ? calibrate_intercept(eta, *spec.rate) : spec.intercept;
  std::vector<double> p(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) p[i] = sigmoid(b + eta[i]);
  return p;
}

MaskedDataset apply_missingness(const Dataset& ds, const MechanismSpec& spec, std::uint64_t seed) {
  ds.validate();
  spec.validate();
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.mask.complete(i))
      throw InvalidArgument("apply_missingness: input dataset must be fully observed");

  MechanismSpec resolved = spec;
  if (spec.kind != MechanismKind::kMcar && spec.rate) {
    resolved.intercept = calibrate_intercept(linear_scores(ds, spec), *spec.rate);
    resolved.rate.reset();
  }
  auto pmiss = missingness_probabilities(ds, resolved);

  MaskedDataset out{ds, std::vector<double>(ds.size()), resolved};
  std::size_t violations = 0;
  double worst = 1.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.observation_prob[i] = 1.0 - pmiss[i];
    if (out.observation_prob[i] < spec.floor) {
      ++violations;
      worst = std::min(worst, out.observation_prob[i]);
    }
  }
  if (violations > 0) {
    throw PositivityError(strprintf(
        "apply_missingness: %zu rows have observation probability below the floor %.4g "
        "(minimum %.3g)",
        violations, spec.floor, worst));
  }

  std::mt19937_64 rng(derive_seed(seed, {"mask"}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::uint8_t m = unif(rng) < pmiss[i] ? 1 : 0;
    switch (spec.target) {
      case MaskTarget::kX2AndY:
        out.data.mask.m2[i] = m;
        out.data.mask.my[i] = m;
        break;
      case MaskTarget::kX2Only: out.data.mask.m2[i] = m; break;
      case MaskTarget::kYOnly: out.data.mask.my[i] = m; break;
    }
  }
  return out;
}

void write_csv(const Dataset& ds, std::ostream& out) {
  ds.validate();
  std::string line;
  for (std::size_t k = 0; k < ds.x1.cols(); ++k) line += strprintf("x1_%zu,", k);
  for (std::size_t k = 0; k < ds.x2.cols(); ++k) line += strprintf("x2_%zu,", k);
  line += "y,m1,m2,my,split\n";
  out << line;
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    for (double v : ds.x1.row(i)) {
      std::snprintf(buf, sizeof buf, "%.9g,", v);
      line += buf;
    }
    for (double v : ds.x2.row(i)) {
      std::snprintf(buf, sizeof buf, "%.9g,", v);
      line += buf;
    }
    line += strprintf("%u,%u,%u,%u,", ds.y[i], ds.mask.m1[i], ds.mask.m2[i], ds.mask.my[i]);
    line += to_string(ds.split[i]);
    line += '\n';
    out << line;
  }
}

Dataset read_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw InvalidArgument("read_csv: empty input");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::size_t d1 = 0, d2 = 0;
  for (const auto& c : cols) {
    if (c.rfind("x1_", 0) == 0) ++d1;
    if (c.rfind("x2_", 0) == 0) ++d2;
  }
  if (cols.size() != d1 + d2 + 5 || cols[d1 + d2] != "y" || cols.back() != "split")
    throw InvalidArgument("read_csv: unexpected header '" + header + "'");

  std::vector<double> v1, v2;
  Dataset ds;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    std::vector<std::string> fields;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != cols.size())
      throw InvalidArgument(strprintf("read_csv: row %zu has %zu fields", n + 1, fields.size()));
    for (std::size_t k = 0; k < d1; ++k) v1.push_back(std::stod(fields[k]));
    for (std::size_t k = 0; k < d2; ++k) v2.push_back(std::stod(fields[d1 + k]));
    auto flag = [&](std::size_t k) { return static_cast<std::uint8_t>(std::stoi(fields[k])); };
    ds.y.push_back(flag(d1 + d2));
    ds.mask.m1.push_back(flag(d1 + d2 + 1));
    ds.mask.m2.push_back(flag(d1 + d2 + 2));
    ds.mask.my.push_back(flag(d1 + d2 + 3));
    ds.split.push_back(split_from_string(fields.back()));
    ++n;
  }
  ds.x1 = ModalityMatrix(n, d1, std::move(v1));
  ds.x2 = ModalityMatrix(n, d2, std::move(v2));
  ds.validate();
  return ds;
}

}  // namespace icym2i
