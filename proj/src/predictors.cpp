#include "icym2i/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace icym2i {

namespace {

constexpr double kProbClamp = 1e-12;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double bce_from_logit(double z, double y) { return softplus(z) - y * z; }

std::vector<double> mean_one(std::span<const double> w, std::size_t n, const char* what) {
  std::vector<double> out(n, 1.0);
  if (w.empty()) return out;
  if (w.size() != n)
    throw InvalidArgument(strprintf("%s: %zu weights for %zu rows", what, w.size(), n));
  double s = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0) throw InvalidArgument(strprintf("%s: weights must be finite and >= 0", what));
    s += v;
  }
  if (!(s > 0)) throw InvalidArgument(strprintf("%s: weights sum to zero", what));
  double mean = s / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = w[i] / mean;
  return out;
}

struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;

  Adam(double lr_, const Classifier& c) : lr(lr_) {
    for (std::size_t k = 0; k < c.weights.size(); ++k) {
      mw.push_back(Eigen::MatrixXd::Zero(c.weights[k].rows(), c.weights[k].cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXd::Zero(c.biases[k].size()));
      vb.push_back(mb.back());
    }
  }

  template <class P, class G, class M>
  void update(P& p, const G& g, M& m, M& v, double c1, double c2) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void step(Classifier& c, const std::vector<Eigen::MatrixXd>& gw, const std::vector<Eigen::VectorXd>& gb) {
    ++t;
    double c1 = 1 - std::pow(b1, static_cast<double>(t));
    double c2 = 1 - std::pow(b2, static_cast<double>(t));
    for (std::size_t k = 0; k < c.weights.size(); ++k) {
      update(c.weights[k], gw[k], mw[k], vw[k], c1, c2);
      update(c.biases[k], gb[k], mb[k], vb[k], c1, c2);
    }
  }
};

// Forward pass on standardized, column-major inputs (d x B). Returns logits (before temperature).
Eigen::RowVectorXd forward(const Classifier& c, const Eigen::MatrixXd& x,
                           std::vector<Eigen::MatrixXd>* acts) {
  Eigen::MatrixXd h = x;
  if (acts) {
    acts->clear();
    acts->push_back(h);
  }
  const std::size_t L = c.weights.size();
  for (std::size_t k = 0; k < L; ++k) {
    Eigen::MatrixXd z = c.weights[k] * h;
    z.colwise() += c.biases[k];
    if (k + 1 < L) z = z.cwiseMax(0.0);
    h = std::move(z);
    if (acts) acts->push_back(h);
  }
  return h.row(0);
}

Eigen::MatrixXd standardize(const Classifier& c, const Eigen::MatrixXd& features) {
  // features: n x d  ->  d x n standardized
  Eigen::MatrixXd x = features.transpose();
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    auto jj = static_cast<std::size_t>(j);
    x.row(j).array() = (x.row(j).array() - c.feature_mean[jj]) / c.feature_scale[jj];
  }
  return x;
}

double weighted_loss(const Eigen::RowVectorXd& z, std::span<const std::uint8_t> y, std::span<const double> w) {
  double s = 0.0, sw = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    auto ii = static_cast<std::size_t>(i);
    s += w[ii] * bce_from_logit(z(i), y[ii]);
    sw += w[ii];
  }
  return s / sw;
}

void init_layers(Classifier& c, Architecture arch, const MLPConfig& cfg, std::mt19937_64& rng) {
  c.weights.clear();
  c.biases.clear();
  std::vector<std::size_t> sizes{c.input_dim};
  if (arch == Architecture::kMlp)
    for (int k = 0; k < cfg.hidden_layers; ++k) sizes.push_back(static_cast<std::size_t>(cfg.hidden_width));
  sizes.push_back(1);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    auto in = static_cast<Eigen::Index>(sizes[k]);
    auto out = static_cast<Eigen::Index>(sizes[k + 1]);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
    if (arch == Architecture::kMlp) {
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in)));
      for (Eigen::Index j = 0; j < in; ++j)
        for (Eigen::Index i = 0; i < out; ++i) w(i, j) = nd(rng);
    }
    c.weights.push_back(std::move(w));
    c.biases.push_back(Eigen::VectorXd::Zero(out));
  }
}

}  // namespace

std::string_view to_string(InputSchema s) {
  switch (s) {
    case InputSchema::kX1: return "x1";
    case InputSchema::kX2: return "x2";
    case InputSchema::kBoth: return "x1+x2";
  }
  return "?";
}

InputSchema input_schema_from_string(std::string_view s) {
  if (s == "x1") return InputSchema::kX1;
  if (s == "x2") return InputSchema::kX2;
  if (s == "x1+x2" || s == "both") return InputSchema::kBoth;
  throw InvalidArgument("unknown input schema: " + std::string(s));
}

void MLPConfig::validate() const {
  if (hidden_layers < 1 || hidden_width < 1 || !(learning_rate > 0) || epochs < 1 || batch_size < 1)
    throw InvalidArgument("MLPConfig: all fields must be positive");
}

Eigen::MatrixXd schema_features(const Dataset& ds, InputSchema schema, std::span<const std::size_t> rows) {
  const std::size_t d1 = schema == InputSchema::kX2 ? 0 : ds.x1.cols();
  const std::size_t d2 = schema == InputSchema::kX1 ? 0 : ds.x2.cols();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d1 + d2));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (std::size_t j = 0; j < d1; ++j) x(r, static_cast<Eigen::Index>(j)) = ds.x1(rows[k], j);
    for (std::size_t j = 0; j < d2; ++j) x(r, static_cast<Eigen::Index>(d1 + j)) = ds.x2(rows[k], j);
  }
  return x;
}

Classifier Classifier::logistic(InputSchema schema, std::size_t input_dim) {
  Classifier c;
  c.architecture = Architecture::kLogistic;
  c.schema = schema;
  c.input_dim = input_dim;
  c.feature_mean.assign(input_dim, 0.0);
  c.feature_scale.assign(input_dim, 1.0);
  c.weights.push_back(Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(input_dim)));
  c.biases.push_back(Eigen::VectorXd::Zero(1));
  return c;
}

Eigen::VectorXd Classifier::logits(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != input_dim)
    throw SchemaError(strprintf("Classifier: expected %zu input columns, got %ld", input_dim,
                                static_cast<long>(features.cols())));
  Eigen::RowVectorXd z = forward(*this, standardize(*this, features), nullptr);
  return z.transpose() / temperature;
}

std::vector<double> Classifier::predict_proba(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd z = logits(features);
  std::vector<double> p(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i)
    p[static_cast<std::size_t>(i)] = std::clamp(sigmoid(z(i)), kProbClamp, 1.0 - kProbClamp);
  return p;
}

std::vector<double> Classifier::predict_proba(const Dataset& ds, std::span<const std::size_t> rows) const {
  return predict_proba(schema_features(ds, schema, rows));
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
  return n;
}

std::vector<double> Classifier::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (Eigen::Index i = 0; i < weights[k].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[k].cols(); ++j) out.push_back(weights[k](i, j));
    for (Eigen::Index i = 0; i < biases[k].size(); ++i) out.push_back(biases[k](i));
  }
  return out;
}

std::string Classifier::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "icym2i-classifier v1\n";
  os << "architecture " << (architecture == Architecture::kMlp ? "mlp" : "logistic") << '\n';
  os << "schema " << to_string(schema) << '\n';
  os << "input_dim " << input_dim << '\n';
  os << "temperature " << temperature << '\n';
  os << "mean";
  for (double v : feature_mean) os << ' ' << v;
  os << "\nscale";
  for (double v : feature_scale) os << ' ' << v;
  os << "\nlayers " << weights.size() << '\n';
  for (std::size_t k = 0; k < weights.size(); ++k) {
    os << "layer " << weights[k].rows() << ' ' << weights[k].cols() << '\n';
    for (Eigen::Index i = 0; i < weights[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights[k].cols(); ++j) os << (j ? " " : "") << weights[k](i, j);
      os << '\n';
    }
    for (Eigen::Index i = 0; i < biases[k].size(); ++i) os << (i ? " " : "") << biases[k](i);
    os << '\n';
  }
  return os.str();
}

Classifier Classifier::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag, version, key, value;
  is >> tag >> version;
  if (tag != "icym2i-classifier" || version != "v1")
    throw InvalidArgument("Classifier::from_text: unrecognised header");
  Classifier c;
  is >> key >> value;
  if (value == "mlp") c.architecture = Architecture::kMlp;
  else if (value == "logistic") c.architecture = Architecture::kLogistic;
  else throw InvalidArgument("Classifier::from_text: unknown architecture " + value);
  is >> key >> value;
  c.schema = input_schema_from_string(value);
  is >> key >> c.input_dim >> key >> c.temperature;
  is >> key;
  c.feature_mean.resize(c.input_dim);
  for (auto& v : c.feature_mean) is >> v;
  is >> key;
  c.feature_scale.resize(c.input_dim);
  for (auto& v : c.feature_scale) is >> v;
  std::size_t layers = 0;
  is >> key >> layers;
  if (!is) throw InvalidArgument("Classifier::from_text: malformed preamble");
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::Index r = 0, cc = 0;
    is >> key >> r >> cc;
    if (!is || key != "layer" || r <= 0 || cc <= 0)
      throw InvalidArgument("Classifier::from_text: malformed layer header");
    Eigen::MatrixXd w(r, cc);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < cc; ++j) is >> w(i, j);
    Eigen::VectorXd b(r);
    for (Eigen::Index i = 0; i < r; ++i) is >> b(i);
    c.weights.push_back(std::move(w));
    c.biases.push_back(std::move(b));
  }
  if (!is) throw InvalidArgument("Classifier::from_text: truncated parameters");
  return c;
}

Classifier train(const Eigen::MatrixXd& x_raw, std::span<const std::uint8_t> y,
                 std::span<const double> weights_in, InputSchema schema, Architecture arch,
                 const MLPConfig& cfg, const Eigen::MatrixXd& x_val_raw,
                 std::span<const std::uint8_t> y_val, std::span<const double> w_val_in) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(x_raw.rows());
  if (n == 0) throw InvalidArgument("train: no training rows");
  if (y.size() != n) throw InvalidArgument("train: label count does not match rows");
  std::vector<double> w = mean_one(weights_in, n, "train");

  Classifier c;
  c.architecture = arch;
  c.schema = schema;
  c.input_dim = static_cast<std::size_t>(x_raw.cols());
  c.diagnostics.max_weight =
      weights_in.empty() ? 1.0 : *std::max_element(weights_in.begin(), weights_in.end());

  // Weighted standardization statistics.
  c.feature_mean.assign(c.input_dim, 0.0);
  c.feature_scale.assign(c.input_dim, 1.0);
  const double sw = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t j = 0; j < c.input_dim; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += w[i] * x_raw(static_cast<Eigen::Index>(i), jj);
    m /= sw;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = x_raw(static_cast<Eigen::Index>(i), jj) - m;
      v += w[i] * d * d;
    }
    v /= sw;
    c.feature_mean[j] = m;
    c.feature_scale[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
  }

  std::mt19937_64 rng(derive_seed(cfg.seed, {"classifier-init"}));
  init_layers(c, arch, cfg, rng);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {"classifier-shuffle"}));

  const Eigen::MatrixXd x = standardize(c, x_raw);
  const bool use_val = x_val_raw.rows() > 0;
  Eigen::MatrixXd xv;
  std::vector<double> wv;
  if (use_val) {
    const auto nv = static_cast<std::size_t>(x_val_raw.rows());
    if (y_val.size() != nv) throw InvalidArgument("train: validation label count mismatch");
    xv = standardize(c, x_val_raw);
    wv = mean_one(w_val_in, nv, "train (validation)");
  }

  Adam opt(cfg.learning_rate, c);
  const std::size_t L = c.weights.size();
  std::vector<Eigen::MatrixXd> gw(L), acts;
  std::vector<Eigen::VectorXd> gb(L);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);

  Classifier best = c;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> idx;
  Eigen::MatrixXd xb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0, epoch_w = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      xb = x(Eigen::all, idx);
      Eigen::RowVectorXd z = forward(c, xb, &acts);
      double bw = 0.0;
      for (auto i : idx) bw += w[static_cast<std::size_t>(i)];
      // dL/dz for the batch loss sum w bce / sum w
      Eigen::MatrixXd delta(1, z.size());
      double loss = 0.0;
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        const auto r = static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]);
        loss += w[r] * bce_from_logit(z(k), y[r]);
        delta(0, k) = w[r] * (sigmoid(z(k)) - y[r]) / bw;
      }
      if (!std::isfinite(loss))
        throw NumericalError(strprintf("train: non-finite loss at epoch %d (max weight %.6g)", epoch,
                                       c.diagnostics.max_weight));
      epoch_loss += loss;
      epoch_w += bw;
      for (std::size_t k = L; k-- > 0;) {
        gw[k] = delta * acts[k].transpose();
        gb[k] = delta.rowwise().sum();
        if (k > 0) {
          Eigen::MatrixXd back = c.weights[k].transpose() * delta;
          delta = back.cwiseProduct((acts[k].array() > 0.0).cast<double>().matrix());
        }
      }
      opt.step(c, gw, gb);
    }
    c.diagnostics.final_train_loss = epoch_loss / epoch_w;
    if (!std::isfinite(c.diagnostics.final_train_loss))
      throw NumericalError(strprintf("train: non-finite loss (max weight %.6g)", c.diagnostics.max_weight));
    if (use_val) {
      double vl = weighted_loss(forward(c, xv, nullptr), y_val, wv);
      if (vl < best_val) {
        best_val = vl;
        best = c;
        best.diagnostics.best_epoch = epoch;
        best.diagnostics.best_val_loss = vl;
      }
    }
  }
  if (use_val) {
    best.diagnostics.final_train_loss = c.diagnostics.final_train_loss;
    return best;
  }
  return c;
}

Classifier train(const Dataset& ds, InputSchema schema, Architecture arch,
                 std::span<const std::size_t> train_rows, std::span<const double> weights,
                 const MLPConfig& cfg, std::span<const std::size_t> val_rows,
                 std::span<const double> val_weights) {
  auto check = [&](std::span<const std::size_t> rows, const char* what) {
    for (auto r : rows) {
      if (r >= ds.size()) throw InvalidArgument(strprintf("train: %s row %zu out of range", what, r));
      bool missing = ds.mask.my[r] || (schema != InputSchema::kX2 && ds.mask.m1[r]) ||
                     (schema != InputSchema::kX1 && ds.mask.m2[r]);
      if (missing)
        throw InvalidArgument(strprintf("train: %s row %zu is not observed on the schema columns", what, r));
    }
  };
  check(train_rows, "training");
  check(val_rows, "validation");
  std::vector<std::uint8_t> y(train_rows.size()), yv(val_rows.size());
  for (std::size_t k = 0; k < train_rows.size(); ++k) y[k] = ds.y[train_rows[k]];
  for (std::size_t k = 0; k < val_rows.size(); ++k) yv[k] = ds.y[val_rows[k]];
  Eigen::MatrixXd xv = val_rows.empty() ? Eigen::MatrixXd() : schema_features(ds, schema, val_rows);
  return train(schema_features(ds, schema, train_rows), y, weights, schema, arch, cfg, xv, yv,
               val_weights);
}

double fit_temperature(std::span<const double> z, std::span<const std::uint8_t> y,
                       std::span<const double> w_in) {
  const std::size_t n = z.size();
  std::vector<double> w = mean_one(w_in, n, "fit_temperature");
  auto nll = [&](double log_a) {
    const double a = std::exp(log_a);  // a = 1 / T
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * bce_from_logit(a * z[i], y[i]);
    return s;
  };
  // NLL is convex in 1/T, hence unimodal in log(1/T): golden-section search.
  double lo = std::log(0.01), hi = std::log(100.0);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  double fc = nll(c), fd = nll(d);
  while (hi - lo > 1e-10) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - g * (hi - lo);
      fc = nll(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (hi - lo);
      fd = nll(d);
    }
  }
  return 1.0 / std::exp(0.5 * (lo + hi));
}

Classifier calibrate(const Classifier& clf, const Dataset& ds, std::span<const std::size_t> val_rows,
                     std::span<const double> weights) {
  if (val_rows.size() < 50)
    throw InvalidArgument(strprintf("calibrate: need at least 50 validation rows, got %zu", val_rows.size()));
  Classifier out = clf;
  std::vector<std::uint8_t> y(val_rows.size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < val_rows.size(); ++k) pos += (y[k] = ds.y[val_rows[k]]);
  out.diagnostics.calibrated = true;
  if (pos == 0 || pos == val_rows.size()) {
    out.diagnostics.calibration_degenerate = true;
    return out;
  }
  Classifier raw = clf;
  raw.temperature = 1.0;
  Eigen::VectorXd z = raw.logits(schema_features(ds, clf.schema, val_rows));
  std::vector<double> zs(z.data(), z.data() + z.size());
  out.temperature = fit_temperature(zs, y, weights);
  return out;
}

}  // namespace icym2i
