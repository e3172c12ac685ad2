#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "icym2i/metrics.hpp"
#include "icym2i/predictors.hpp"

using namespace icym2i;

namespace {

MLPConfig small_mlp(std::uint64_t seed) {
  MLPConfig c;
  c.hidden_layers = 1;
  c.hidden_width = 8;
  c.epochs = 10;
  c.batch_size = 64;
  c.seed = seed;
  return c;
}

// Rows replicated from exact counts N(x1, x2, y); x1 in {0, 1}, x2 in {0, 1}.
Dataset enumerated(const std::array<int, 8>& counts) {
  std::vector<double> a, b;
  Dataset ds;
  for (int y = 0; y < 2; ++y)
    for (int x1 = 0; x1 < 2; ++x1)
      for (int x2 = 0; x2 < 2; ++x2)
        for (int k = 0; k < counts[static_cast<std::size_t>(y * 4 + x1 * 2 + x2)]; ++k) {
          a.push_back(x1);
          b.push_back(x2);
          ds.y.push_back(static_cast<std::uint8_t>(y));
        }
  const std::size_t n = ds.y.size();
  ds.x1 = ModalityMatrix(n, 1, a);
  ds.x2 = ModalityMatrix(n, 1, b);
  ds.mask = MissingnessMask::all_observed(n);
  ds.split.assign(n, Split::train);
  return ds;
}

}  // namespace

TEST(Classifier, LogisticStartsAtHalf) {
  Classifier c = Classifier::logistic(InputSchema::kBoth, 3);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
  for (double p : c.predict_proba(x)) EXPECT_DOUBLE_EQ(p, 0.5);
  EXPECT_EQ(c.parameter_count(), 4u);
}

TEST(Classifier, LearnsLogicGate) {
  Dataset ds = generate_logic_gate(Gate::kXor, 4000, 1);
  auto tr = ds.rows(Split::train), te = ds.rows(Split::test);
  MLPConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 3;
  Classifier c = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, {}, cfg);
  auto s = c.predict_proba(ds, te);
  std::vector<std::uint8_t> y;
  for (auto r : te) y.push_back(ds.y[r]);
  EXPECT_GT(weighted_auroc(s, y), 0.99);
}

TEST(Classifier, SeedDeterminism) {
  Dataset ds = generate_logic_gate(Gate::kAnd, 1000, 1);
  auto tr = ds.rows(Split::train);
  auto a = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, {}, small_mlp(4));
  auto b = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, {}, small_mlp(4));
  auto c = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, {}, small_mlp(5));
  EXPECT_EQ(a.flat_parameters(), b.flat_parameters());
  EXPECT_NE(a.flat_parameters(), c.flat_parameters());
}

TEST(Classifier, WeightScaleDoesNotChangeFit) {
  Dataset ds = generate_logic_gate(Gate::kOr, 1000, 2);
  auto tr = ds.rows(Split::train);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::vector<double> w(tr.size()), w2(tr.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = u(rng);
    w2[k] = 2.0 * w[k];
  }
  auto a = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, w, small_mlp(9));
  auto b = train(ds, InputSchema::kBoth, Architecture::kMlp, tr, w2, small_mlp(9));
  auto pa = a.flat_parameters(), pb = b.flat_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_NEAR(pa[k], pb[k], 1e-12);
}

TEST(Classifier, IpwTrainingOnCompleteCasesMatchesFullData) {
  // y depends on x1 and x2 through an interaction the logistic model cannot express,
  // so the complete-case fit is biased unless it is reweighted.
  const std::array<int, 8> full_counts{200, 100, 250, 50,   // y = 0: (x1,x2) = 00, 01, 10, 11
                                       50, 150, 50, 150};   // y = 1
  // P(observed | x1) = 0.8 for x1 = 0 and 0.2 for x1 = 1, applied exactly.
  std::array<int, 8> cc_counts{};
  for (std::size_t k = 0; k < 8; ++k) cc_counts[k] = full_counts[k] * ((k / 2) % 2 == 0 ? 4 : 1) / 5;
  Dataset full = enumerated(full_counts), cc = enumerated(cc_counts);
  std::vector<double> w(cc.size());
  for (std::size_t i = 0; i < cc.size(); ++i) w[i] = cc.x1(i, 0) > 0.5 ? 5.0 : 1.25;

  MLPConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3000;
  cfg.batch_size = 100000;  // full batch
  cfg.seed = 1;
  auto ref = train(full, InputSchema::kBoth, Architecture::kLogistic, full.all_rows(), {}, cfg);
  auto ipw = train(cc, InputSchema::kBoth, Architecture::kLogistic, cc.all_rows(), w, cfg);
  auto naive = train(cc, InputSchema::kBoth, Architecture::kLogistic, cc.all_rows(), {}, cfg);

  Eigen::MatrixXd grid(4, 2);
  grid << 0, 0, 0, 1, 1, 0, 1, 1;
  auto pr = ref.predict_proba(grid), pi = ipw.predict_proba(grid), pn = naive.predict_proba(grid);
  double worst_ipw = 0, worst_naive = 0;
  for (int k = 0; k < 4; ++k) {
    worst_ipw = std::max(worst_ipw, std::abs(pr[k] - pi[k]));
    worst_naive = std::max(worst_naive, std::abs(pr[k] - pn[k]));
  }
  EXPECT_LT(worst_ipw, 2e-3);
  EXPECT_GT(worst_naive, 0.03);
}

TEST(Classifier, RejectsRowsMissingOnSchema) {
  Dataset ds = generate_logic_gate(Gate::kAnd, 500, 1);
  ds.mask.m2[0] = 1;
  ds.mask.my[0] = 1;
  std::vector<std::size_t> rows{0, 1, 2};
  EXPECT_THROW(train(ds, InputSchema::kX2, Architecture::kMlp, rows, {}, small_mlp(1)), InvalidArgument);
  std::vector<double> bad{1.0, -1.0, 1.0};
  std::vector<std::size_t> ok{1, 2, 3};
  EXPECT_THROW(train(ds, InputSchema::kX1, Architecture::kMlp, ok, bad, small_mlp(1)), InvalidArgument);
}

TEST(Classifier, TextRoundTripPreservesPredictions) {
  Dataset ds = generate_logic_gate(Gate::kAnd, 1000, 1);
  auto tr = ds.rows(Split::train);
  auto c = calibrate(train(ds, InputSchema::kBoth, Architecture::kMlp, tr, {}, small_mlp(2)), ds, ds.rows(Split::val));
  auto back = Classifier::from_text(c.to_text());
  auto rows = ds.rows(Split::test);
  auto p = c.predict_proba(ds, rows), q = back.predict_proba(ds, rows);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-12);
  EXPECT_THROW(Classifier::from_text("garbage"), InvalidArgument);
}

TEST(Calibration, RecoversTemperature) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> z;
  std::vector<std::uint8_t> y;
  for (int i = 0; i < 40000; ++i) {
    const double v = nd(rng);
    y.push_back(u(rng) < 1.0 / (1.0 + std::exp(-v)) ? 1 : 0);
    z.push_back(3.0 * v);  // overconfident logits
  }
  EXPECT_NEAR(fit_temperature(z, y, {}), 3.0, 0.1);
}

TEST(Calibration, NeedsFiftyRowsAndHandlesSingleClass) {
  Dataset ds = generate_logic_gate(Gate::kAnd, 1000, 1);
  auto c = train(ds, InputSchema::kBoth, Architecture::kMlp, ds.rows(Split::train), {}, small_mlp(1));
  auto val = ds.rows(Split::val);
  std::vector<std::size_t> few(val.begin(), val.begin() + 20);
  EXPECT_THROW(calibrate(c, ds, few), InvalidArgument);
  std::vector<std::size_t> zeros;
  for (auto r : ds.all_rows())
    if (ds.y[r] == 0 && zeros.size() < 80) zeros.push_back(r);
  auto d = calibrate(c, ds, zeros);
  EXPECT_TRUE(d.diagnostics.calibration_degenerate);
  EXPECT_DOUBLE_EQ(d.temperature, 1.0);
}

TEST(Schema, FeaturesAndNames) {
  Dataset ds = generate_logic_gate(Gate::kAnd, 10, 1);
  std::vector<std::size_t> rows{0, 3};
  auto f = schema_features(ds, InputSchema::kBoth, rows);
  ASSERT_EQ(f.rows(), 2);
  ASSERT_EQ(f.cols(), 2);
  EXPECT_EQ(f(1, 0), ds.x1(3, 0));
  EXPECT_EQ(f(1, 1), ds.x2(3, 0));
  EXPECT_EQ(input_schema_from_string("x1+x2"), InputSchema::kBoth);
  EXPECT_EQ(to_string(InputSchema::kX2), "x2");
  EXPECT_THROW(input_schema_from_string("x3"), InvalidArgument);
}
