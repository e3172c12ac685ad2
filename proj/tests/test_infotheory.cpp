#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "icym2i/infotheory.hpp"
#include "oracles.hpp"

using namespace icym2i;

namespace {

DiscreteJoint random_joint(std::size_t ny, std::size_t n1, std::size_t n2, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> g(0.7, 1.0);
  DiscreteJoint j(ny, n1, n2);
  for (auto& v : j.prob()) v = g(rng);
  j.normalize();
  return j;
}

oracle::Table as_table(const DiscreteJoint& j) { return {j.ny(), j.n1(), j.n2(), j.prob()}; }

DiscreteJoint gate_joint(int gate) {
  DiscreteJoint j(2, 2, 2);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      int y = gate == 0 ? (a & b) : gate == 1 ? (a | b) : (a ^ b);
      j(static_cast<std::size_t>(y), static_cast<std::size_t>(a), static_cast<std::size_t>(b)) = 0.25;
    }
  return j;
}

}  // namespace

TEST(Entropy, IdentitiesMatchKlForms) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto j = random_joint(2 + s % 2, 2 + s % 3, 3, s);
    auto t = as_table(j);
    EXPECT_NEAR(mi_y_x1x2(j), oracle::mi_joint(t), 1e-12);
    EXPECT_NEAR(mi_y_x1(j), oracle::mi_x1(t), 1e-12);
    EXPECT_NEAR(cmi_y_x2_given_x1(j), oracle::cmi_x2_given_x1(t), 1e-12);
    // chain rule
    EXPECT_NEAR(mi_y_x1(j) + cmi_y_x2_given_x1(j), mi_y_x1x2(j), 1e-12);
    EXPECT_NEAR(mi_y_x2(j) + cmi_y_x1_given_x2(j), mi_y_x1x2(j), 1e-12);
    EXPECT_NEAR(coinformation(j), mi_y_x1(j) - cmi_y_x1_given_x2(j), 1e-12);
  }
}

TEST(Entropy, SwappingModalitiesSwapsTerms) {
  auto j = random_joint(2, 3, 4, 5);
  auto s = j.permuted({0, 2, 1});
  EXPECT_EQ(s.n1(), 4u);
  EXPECT_NEAR(mi_y_x1(s), mi_y_x2(j), 1e-12);
  EXPECT_NEAR(cmi_y_x1_given_x2(s), cmi_y_x2_given_x1(j), 1e-12);
  EXPECT_NEAR(coinformation(s), coinformation(j), 1e-12);
  EXPECT_THROW(j.permuted({0, 0, 1}), InvalidArgument);
}

TEST(Entropy, LogicGates) {
  auto x = gate_joint(2);
  EXPECT_NEAR(mi_y_x1x2(x), 1.0, 1e-12);
  EXPECT_NEAR(mi_y_x1(x), 0.0, 1e-12);
  EXPECT_NEAR(coinformation(x), -1.0, 1e-12);
  auto a = gate_joint(0);
  EXPECT_NEAR(mi_y_x1x2(a), binary_entropy(0.25), 1e-12);
  EXPECT_NEAR(entropy(a, kX1 | kX2), 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(binary_entropy(0.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
}

TEST(DiscreteJoint, SamplesValidationAndText) {
  std::vector<int> y{0, 1, 1, 0}, a{0, 1, 1, 1}, b{1, 0, 0, 1};
  auto j = DiscreteJoint::from_samples(y, a, b, std::vector<double>{1, 1, 2, 0}, 2, 2, 2);
  EXPECT_NEAR(j(1, 1, 0), 0.75, 1e-15);
  EXPECT_NEAR(j(0, 0, 1), 0.25, 1e-15);
  EXPECT_NO_THROW(j.validate());
  std::stringstream ss;
  j.write_text(ss);
  auto back = DiscreteJoint::read_text(ss);
  EXPECT_EQ(back.prob(), j.prob());
  DiscreteJoint bad(2, 2, 2, std::vector<double>(8, 0.2));
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_THROW(DiscreteJoint(2, 2, 2, std::vector<double>(7, 0.1)), InvalidArgument);
  std::vector<int> out{0, 2, 0, 0};
  EXPECT_THROW(DiscreteJoint::from_samples(y, out, b, {}, 2, 2, 2), InvalidArgument);
}

TEST(IpwMutualInfo, ExactConditionalsReproduceJointMi) {
  auto j = random_joint(3, 2, 3, 8);
  std::vector<double> cond, mass;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      double px = 0;
      for (std::size_t y = 0; y < 3; ++y) px += j(y, a, b);
      mass.push_back(px);
      for (std::size_t y = 0; y < 3; ++y) cond.push_back(j(y, a, b) / px);
    }
  std::vector<double> w(mass.size(), 1.0);
  EXPECT_NEAR(ipw_mutual_info(cond, 3, w, mass), mi_y_x1x2(j), 1e-12);
}

TEST(IpwMutualInfo, StabilizedWeightsRecoverFullMiUnderMar) {
  // Exhaustive over a grid of binary joints and mechanisms P(M = 1 | x1); C = {x1}.
  // Complete cases have mass p(x)(1 - pi(x1)) / (1 - p(m)); the stabilized weight is
  // (1 - p(m)) / (1 - pi(x1)); p(y | x) is unchanged by MAR selection.
  const std::vector<double> levels{0.05, 0.15, 0.3, 0.5};
  const std::vector<double> mech{0.1, 0.35, 0.6, 0.9};
  std::size_t checked = 0;
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 400; ++rep) {
    DiscreteJoint j(2, 2, 2);
    for (auto& v : j.prob()) v = levels[rng() % levels.size()];
    j.normalize();
    const double pi0 = mech[rng() % mech.size()], pi1 = mech[rng() % mech.size()];
    double pm = 0;
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) pm += (j(0, a, b) + j(1, a, b)) * (a ? pi1 : pi0);
    std::vector<double> p1, mass, w;
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) {
        const double px = j(0, a, b) + j(1, a, b);
        const double pi = a ? pi1 : pi0;
        p1.push_back(j(1, a, b) / px);
        mass.push_back(px * (1 - pi) / (1 - pm));
        w.push_back((1 - pm) / (1 - pi));
      }
    EXPECT_NEAR(ipw_mutual_info_binary(p1, w, mass), mi_y_x1x2(j), 1e-9);
    ++checked;
  }
  EXPECT_EQ(checked, 400u);
}

TEST(IpwMutualInfo, ClampsAndValidates) {
  std::vector<double> p1{0.0, 1.0, 0.5}, w{1, 1, 1};
  IpwMiDiagnostics d;
  const double v = ipw_mutual_info_binary(p1, w, {}, &d);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(d.clamped, 2u);
  EXPECT_THROW(ipw_mutual_info_binary(p1, std::vector<double>{1, 1}), InvalidArgument);
  std::vector<double> nan{0.5, std::nan("")};
  EXPECT_THROW(ipw_mutual_info_binary(nan, std::vector<double>{1, 1}), NumericalError);
}

TEST(Quantizer, RecoversSeparatedClusters) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.05);
  Eigen::MatrixXd x(300, 2);
  const double cx[3] = {-5, 0, 5};
  for (int i = 0; i < 300; ++i) {
    x(i, 0) = cx[i % 3] + nd(rng);
    x(i, 1) = nd(rng);
  }
  auto q = fit_quantizer(x, 3, 7);
  ASSERT_EQ(q.bins(), 3u);
  EXPECT_FALSE(q.degenerate);
  EXPECT_LT(q.centroids(0, 0), q.centroids(1, 0));
  EXPECT_LT(q.centroids(1, 0), q.centroids(2, 0));
  auto codes = q.apply(x);
  for (int i = 0; i < 300; ++i) EXPECT_EQ(codes[static_cast<std::size_t>(i)], i % 3);
  auto again = fit_quantizer(x, 3, 7);
  EXPECT_TRUE(again.centroids.isApprox(q.centroids, 0.0));
}

TEST(Quantizer, DegenerateAndTies) {
  Eigen::MatrixXd x(6, 1);
  x << 1, 1, 1, 2, 2, 2;
  auto q = fit_quantizer(x, 4, 1);
  EXPECT_TRUE(q.degenerate);
  EXPECT_EQ(q.bins(), 2u);
  // a point equidistant from both centroids goes to the lower index
  std::vector<double> mid{1.5};
  EXPECT_EQ(q.assign(mid), 0);
  std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(q.assign(wrong), SchemaError);
  EXPECT_THROW(fit_quantizer(x, 1, 1), InvalidArgument);
}
