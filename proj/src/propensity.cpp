#include "icym2i/propensity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace icym2i {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct Design {
  Eigen::MatrixXd x;  // n x (p + 1), last column is the intercept
  Eigen::VectorXd m;  // 1 = missing
};

Design build_design(const Dataset& ds, const CovariateSelector& sel,
                    std::span<const std::size_t> rows) {
  std::vector<double> c;
  sel.extract(ds, rows.empty() ? 0 : rows[0], c);
  const auto p = static_cast<Eigen::Index>(c.size());
  Design d{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), p + 1),
           Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    sel.extract(ds, rows[k], c);
    for (Eigen::Index j = 0; j < p; ++j) d.x(r, j) = c[static_cast<std::size_t>(j)];
    d.x(r, p) = 1.0;
    d.m(r) = ds.mask.complete(rows[k]) ? 0.0 : 1.0;
  }
  return d;
}

struct IrlsOutcome {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
};

/// Newton-Raphson on the (optionally ridge-penalized) logistic log-likelihood.
/// The intercept is never penalized.
IrlsOutcome irls(const Design& d, double ridge, const PropensityOptions& opt) {
  const Eigen::Index p = d.x.cols();
  IrlsOutcome out;
  out.beta = Eigen::VectorXd::Zero(p);
  const double n = static_cast<double>(d.x.rows());
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Eigen::VectorXd eta = d.x * out.beta;
    Eigen::VectorXd mu = eta.unaryExpr([](double z) { return sigmoid(z); });
    Eigen::VectorXd w = mu.unaryExpr([](double m) { return std::max(m * (1.0 - m), 1e-12); });
    Eigen::VectorXd grad = d.x.transpose() * (d.m - mu) / n;
    Eigen::MatrixXd hess = d.x.transpose() * w.asDiagonal() * d.x / n;
    if (ridge > 0) {
      for (Eigen::Index j = 0; j + 1 < p; ++j) {
        grad(j) -= ridge * out.beta(j);
        hess(j, j) += ridge;
      }
    }
    out.grad_norm = grad.norm();
    out.iterations = it;
    if (out.grad_norm < opt.gradient_tolerance) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) break;
    // Damp very large steps; saturated fits otherwise overshoot.
    double sn = step.lpNorm<Eigen::Infinity>();
    if (sn > 10.0) step *= 10.0 / sn;
    out.beta += step;
  }
  return out;
}

double log_loss(const Design& d, const Eigen::VectorXd& beta) {
  if (d.x.rows() == 0) return 0.0;
  Eigen::VectorXd eta = d.x * beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    double p = std::clamp(sigmoid(eta(i)), 1e-15, 1.0 - 1e-15);
    s -= d.m(i) > 0.5 ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(eta.size());
}

bool separated(const IrlsOutcome& o) {
  return !o.converged || !o.beta.allFinite() || o.beta.lpNorm<Eigen::Infinity>() > 30.0;
}

IrlsOutcome fit_with_fallback(const Design& d, const PropensityOptions& opt, bool& fallback) {
  IrlsOutcome o = irls(d, 0.0, opt);
  fallback = false;
  if (separated(o)) {
    fallback = true;
    o = irls(d, opt.ridge_fallback, opt);
  }
  return o;
}

}  // namespace

std::vector<std::string> CovariateSelector::names(const Dataset& ds) const {
  std::vector<std::string> out;
  if (x1)
    for (std::size_t k = 0; k < ds.x1.cols(); ++k) out.push_back(strprintf("x1_%zu", k));
  if (x2)
    for (std::size_t k = 0; k < ds.x2.cols(); ++k) out.push_back(strprintf("x2_%zu", k));
  if (y) out.emplace_back("y");
  return out;
}

void CovariateSelector::extract(const Dataset& ds, std::size_t row, std::vector<double>& out) const {
  out.clear();
  if (x1) {
    auto r = ds.x1.row(row);
    out.insert(out.end(), r.begin(), r.end());
  }
  if (x2) {
    auto r = ds.x2.row(row);
    out.insert(out.end(), r.begin(), r.end());
  }
  if (y) out.push_back(ds.y[row]);
}

bool CovariateSelector::observed(const Dataset& ds, std::size_t row) const {
  return !(x1 && ds.mask.m1[row]) && !(x2 && ds.mask.m2[row]) && !(y && ds.mask.my[row]);
}

double WeightVector::max() const {
  return w.empty() ? 0.0 : *std::max_element(w.begin(), w.end());
}

double PropensityModel::missing_prob(std::span<const double> c) const {
  if (c.size() != coefficients.size())
    throw SchemaError(strprintf("PropensityModel: expected %zu covariates, got %zu",
                                coefficients.size(), c.size()));
  double eta = intercept;
  for (std::size_t k = 0; k < c.size(); ++k) eta += coefficients[k] * c[k];
  return sigmoid(eta);
}

double PropensityModel::observation_prob(std::span<const double> c, bool* clamped) const {
  double p = 1.0 - missing_prob(c);
  bool hit = p < floor;
  if (clamped) *clamped = hit;
  return hit ? floor : p;
}

void PropensityModel::check_schema(const Dataset& ds) const {
  auto names = selector.names(ds);
  if (names != covariate_names) {
    std::string got, want;
    for (auto& n : names) got += n + " ";
    for (auto& n : covariate_names) want += n + " ";
    throw SchemaError("PropensityModel: covariate schema mismatch (model: " + want +
                      "| data: " + got + ")");
  }
}

std::string PropensityModel::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "icym2i-propensity v1\n";
  os << "selector " << selector.x1 << ' ' << selector.x2 << ' ' << selector.y << '\n';
  os << "floor " << floor << '\n';
  os << "intercept " << intercept << '\n';
  os << "covariates " << covariate_names.size() << '\n';
  for (std::size_t k = 0; k < covariate_names.size(); ++k)
    os << covariate_names[k] << ' ' << coefficients[k] << '\n';
  return os.str();
}

PropensityModel PropensityModel::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag, version;
  is >> tag >> version;
  if (tag != "icym2i-propensity" || version != "v1")
    throw InvalidArgument("PropensityModel::from_text: unrecognised header");
  PropensityModel m;
  std::size_t count = 0;
  std::string key;
  is >> key >> m.selector.x1 >> m.selector.x2 >> m.selector.y;
  is >> key >> m.floor;
  is >> key >> m.intercept;
  is >> key >> count;
  if (!is) throw InvalidArgument("PropensityModel::from_text: malformed record");
  m.covariate_names.resize(count);
  m.coefficients.resize(count);
  for (std::size_t k = 0; k < count; ++k) is >> m.covariate_names[k] >> m.coefficients[k];
  if (!is) throw InvalidArgument("PropensityModel::from_text: truncated coefficient list");
  return m;
}

PropensityModel fit_propensity(const Dataset& ds, const CovariateSelector& selector,
                               std::span<const std::size_t> rows_in,
                               const PropensityOptions& options) {
  ds.validate();
  if (!(options.floor > 0.0 && options.floor <= 0.5))
    throw InvalidArgument("fit_propensity: floor must be in (0, 0.5]");
  std::vector<std::size_t> rows(rows_in.begin(), rows_in.end());
  if (rows.empty()) rows = ds.all_rows();

  std::size_t n_missing = 0;
  for (auto r : rows) {
    if (!selector.observed(ds, r))
      throw InvalidArgument(
          "fit_propensity: covariates must be observed on every row (MAR estimability)");
    if (!ds.mask.complete(r)) ++n_missing;
  }
  if (n_missing == 0 || n_missing == rows.size())
    throw InvalidArgument("fit_propensity: degenerate mechanism (all rows observed or all missing)");
  if (n_missing < 2 || rows.size() - n_missing < 2)
    throw InvalidArgument("fit_propensity: need at least 2 rows in each missingness class");

  // Held-out log-loss on every fifth row, then refit on everything.
  std::vector<std::size_t> fit_rows, held_rows;
  for (std::size_t k = 0; k < rows.size(); ++k) (k % 5 == 4 ? held_rows : fit_rows).push_back(rows[k]);
  double heldout = 0.0;
  {
    Design fd = build_design(ds, selector, fit_rows);
    bool fb = false;
    Eigen::VectorXd b = fd.m.minCoeff() != fd.m.maxCoeff()
                            ? fit_with_fallback(fd, options, fb).beta
                            : Eigen::VectorXd::Zero(fd.x.cols());
    heldout = log_loss(build_design(ds, selector, held_rows), b);
  }

  Design d = build_design(ds, selector, rows);
  bool fallback = false;
  IrlsOutcome o = fit_with_fallback(d, options, fallback);

  PropensityModel m;
  const auto p = static_cast<std::size_t>(d.x.cols() - 1);
  m.coefficients.resize(p);
  for (std::size_t j = 0; j < p; ++j) m.coefficients[j] = o.beta(static_cast<Eigen::Index>(j));
  m.intercept = o.beta(static_cast<Eigen::Index>(p));
  m.floor = options.floor;
  m.selector = selector;
  m.covariate_names = selector.names(ds);
  m.report = {o.iterations, o.converged, fallback, o.grad_norm, heldout};
  return m;
}

WeightVector ipw_weights_from_probabilities(std::span<const double> obs, double floor,
                                            WeightNormalization normalization) {
  WeightVector wv;
  wv.kind = WeightKind::kInverseProbability;
  wv.w.resize(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!(obs[i] > 0.0 && obs[i] <= 1.0) && !(obs[i] == 0.0))
      throw InvalidArgument("ipw weights: observation probability outside [0, 1]");
    double p = obs[i];
    if (p < floor) {
      p = floor;
      ++wv.floor_hits;
    }
    wv.w[i] = 1.0 / p;
  }
  if (normalization == WeightNormalization::kMeanOne) normalize_mean_one(wv);
  return wv;
}

WeightVector ipw_weights(const PropensityModel& model, const Dataset& ds,
                         std::span<const std::size_t> rows, WeightNormalization normalization) {
  model.check_schema(ds);
  std::vector<double> obs(rows.size());
  std::vector<double> c;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!ds.mask.complete(rows[k]))
      throw InvalidArgument("ipw_weights: rows must be complete cases");
    model.selector.extract(ds, rows[k], c);
    obs[k] = 1.0 - model.missing_prob(c);
  }
  return ipw_weights_from_probabilities(obs, model.floor, normalization);
}

WeightVector stabilized_weights_from_probabilities(std::span<const double> obs,
                                                   double marginal_observation_rate, double floor) {
  if (!(marginal_observation_rate > 0.0 && marginal_observation_rate <= 1.0))
    throw InvalidArgument("stabilized weights: marginal observation rate must be in (0, 1]");
  WeightVector wv = ipw_weights_from_probabilities(obs, floor, WeightNormalization::kNone);
  wv.kind = WeightKind::kStabilized;
  for (double& w : wv.w) w *= marginal_observation_rate;
  return wv;
}

WeightVector mi_correction_weights(const PropensityModel& model, const Dataset& ds,
                                   std::span<const std::size_t> rows) {
  model.check_schema(ds);
  std::vector<double> c;
  double pm = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    model.selector.extract(ds, i, c);
    pm += model.missing_prob(c);
  }
  pm /= static_cast<double>(ds.size());
  std::vector<double> obs(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!ds.mask.complete(rows[k]))
      throw InvalidArgument("mi_correction_weights: rows must be complete cases");
    model.selector.extract(ds, rows[k], c);
    obs[k] = 1.0 - model.missing_prob(c);
  }
  return stabilized_weights_from_probabilities(obs, 1.0 - pm, model.floor);
}

void normalize_mean_one(WeightVector& wv) {
  if (wv.w.empty()) return;
  double mean = std::accumulate(wv.w.begin(), wv.w.end(), 0.0) / static_cast<double>(wv.w.size());
  for (double& w : wv.w) w /= mean;
  wv.normalization = WeightNormalization::kMeanOne;
}

double kish_effective_size(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double v : w) {
    s += v;
    s2 += v * v;
  }
  return s2 > 0 ? s * s / s2 : 0.0;
}

}  // namespace icym2i
