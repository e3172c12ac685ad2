#include <gtest/gtest.h>

#include <cmath>

#include "icym2i/propensity.hpp"

using namespace icym2i;

namespace {

MaskedDataset mar_gate(Gate g, std::size_t n, std::uint64_t seed) {
  return apply_missingness(generate_logic_gate(g, n, seed), MechanismSpec::binary(MechanismKind::kMar, 0.2, 0.8),
                           seed + 1);
}

}  // namespace

TEST(Propensity, SaturatedFitMatchesEmpiricalRates) {
  auto md = mar_gate(Gate::kAnd, 10000, 3);
  auto model = fit_propensity(md.data, CovariateSelector{});
  EXPECT_TRUE(model.report.converged);
  EXPECT_FALSE(model.report.ridge_fallback);
  // a saturated logistic model reproduces the per-cell missing fractions
  std::array<double, 2> miss{}, count{};
  for (std::size_t i = 0; i < md.data.size(); ++i) {
    auto a = static_cast<std::size_t>(md.data.x1(i, 0));
    count[a] += 1;
    miss[a] += md.data.mask.complete(i) ? 0 : 1;
  }
  for (std::size_t a = 0; a < 2; ++a) {
    std::vector<double> c{static_cast<double>(a)};
    EXPECT_NEAR(model.missing_prob(c), miss[a] / count[a], 1e-6);
  }
  EXPECT_NEAR(model.missing_prob(std::vector<double>{1.0}), 0.8, 0.03);
}

TEST(Propensity, IpwRecoversFullMean) {
  auto md = mar_gate(Gate::kOr, 20000, 5);
  auto model = fit_propensity(md.data, CovariateSelector{});
  auto rows = md.data.complete_rows();
  auto w = ipw_weights(model, md.data, rows);
  double sw = 0, sy = 0, cc = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    sw += w.w[k];
    sy += w.w[k] * md.data.y[rows[k]];
    cc += md.data.y[rows[k]];
  }
  double full = 0;
  for (auto v : md.data.y) full += v;
  full /= static_cast<double>(md.data.size());
  EXPECT_NEAR(sy / sw, full, 0.015);
  EXPECT_GT(std::abs(cc / static_cast<double>(rows.size()) - full), 0.1);  // the shift being corrected
}

TEST(Propensity, WeightsFromProbabilities) {
  std::vector<double> obs{0.5, 0.25, 0.001, 1.0};
  auto w = ipw_weights_from_probabilities(obs, 0.01, WeightNormalization::kNone);
  EXPECT_DOUBLE_EQ(w.w[0], 2.0);
  EXPECT_DOUBLE_EQ(w.w[1], 4.0);
  EXPECT_DOUBLE_EQ(w.w[2], 100.0);
  EXPECT_DOUBLE_EQ(w.w[3], 1.0);
  EXPECT_EQ(w.floor_hits, 1u);
  auto n = ipw_weights_from_probabilities(obs, 0.01, WeightNormalization::kMeanOne);
  double mean = 0;
  for (double v : n.w) mean += v;
  EXPECT_NEAR(mean / 4, 1.0, 1e-12);
  EXPECT_NEAR(n.w[1] / n.w[0], 2.0, 1e-12);
}

TEST(Propensity, StabilizedWeightsAreOneUnderMcar) {
  std::vector<double> obs(1000, 0.37);
  auto w = stabilized_weights_from_probabilities(obs, 0.37, 0.01);
  for (double v : w.w) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_EQ(w.kind, WeightKind::kStabilized);
}

TEST(Propensity, McarFittedStabilizedWeightsNearOne) {
  auto md = apply_missingness(generate_logic_gate(Gate::kXor, 10000, 2), MechanismSpec::mcar(0.5), 3);
  auto model = fit_propensity(md.data, CovariateSelector{});
  auto w = mi_correction_weights(model, md.data, md.data.complete_rows());
  for (double v : w.w) EXPECT_NEAR(v, 1.0, 0.05);
}

TEST(Propensity, SeparationFallsBackToRidge) {
  // missing exactly when x1 = 1: perfectly separable
  Dataset ds = generate_logic_gate(Gate::kAnd, 1000, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ds.mask.m2[i] = ds.x1(i, 0) > 0.5 ? 1 : 0;
    ds.mask.my[i] = ds.mask.m2[i];
  }
  auto model = fit_propensity(ds, CovariateSelector{});
  EXPECT_TRUE(model.report.ridge_fallback);
  for (double c : model.coefficients) EXPECT_TRUE(std::isfinite(c));
  EXPECT_GT(model.missing_prob(std::vector<double>{1.0}), 0.9);
  EXPECT_LT(model.missing_prob(std::vector<double>{0.0}), 0.1);
}

TEST(Propensity, TextRoundTripAndSchema) {
  auto md = mar_gate(Gate::kAnd, 2000, 8);
  auto model = fit_propensity(md.data, CovariateSelector{});
  auto back = PropensityModel::from_text(model.to_text());
  EXPECT_NEAR(back.intercept, model.intercept, 1e-12);
  ASSERT_EQ(back.coefficients.size(), model.coefficients.size());
  EXPECT_NEAR(back.coefficients[0], model.coefficients[0], 1e-12);
  EXPECT_NO_THROW(back.check_schema(md.data));
  ClusteredLatentSpec s;
  s.n = 100;
  EXPECT_THROW(back.check_schema(generate_clustered_latent(s)), SchemaError);
  EXPECT_ANY_THROW(PropensityModel::from_text("not a model"));
}

TEST(Propensity, IpwWeightsRequireCompleteRows) {
  auto md = mar_gate(Gate::kAnd, 2000, 8);
  auto model = fit_propensity(md.data, CovariateSelector{});
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < md.data.size() && rows.empty(); ++i)
    if (!md.data.mask.complete(i)) rows.push_back(i);
  EXPECT_THROW(ipw_weights(model, md.data, rows), InvalidArgument);
}

TEST(Propensity, KishEffectiveSize) {
  EXPECT_DOUBLE_EQ(kish_effective_size(std::vector<double>(10, 3.0)), 10.0);
  EXPECT_DOUBLE_EQ(kish_effective_size(std::vector<double>{0, 0, 5, 0}), 1.0);
  EXPECT_NEAR(kish_effective_size(std::vector<double>{1, 2}), 9.0 / 5.0, 1e-12);
}
