// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nvdp/dropout_posterior.hpp"
#include "nvdp/setenc.hpp"
#include "test_util.hpp"

using namespace nvdp;
using nvdp::testing::random_matrix;

namespace {

// KL(N(m1, v1) || N(m2, v2)) for scalars.
double gaussian_kl_oracle(double m1, double v1, double m2, double v2) {
  return 0.5 * (std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
}

double dropout_kl_oracle(double p, double p_hat, double theta) {
  return gaussian_kl_oracle((1 - p) * theta, p * (1 - p) * theta * theta, (1 - p_hat) * theta,
                            p_hat * (1 - p_hat) * theta * theta);
}

double kl_entry(double p, double p_hat) {
  Graph g;
  return kl_conditional_layer(g.constant(p), g.constant(p_hat)).scalar();
}

}  // namespace

TEST(LowRankRates, ZeroLogitsGiveOneEighth) {
  Graph g;
  const Matrix p = low_rank_rates(g.constant(Matrix::Zero(1, 4 + 3 + 1)), 4, 3, g.constant(1.0))
                       .data();
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 3);
  for (Index j = 0; j < 3; ++j) {
    for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p(i, j), 0.125);
  }
}

TEST(LowRankRates, VeryNegativeLogitsHitTheFloor) {
  Graph g;
  const Matrix p =
      low_rank_rates(g.constant(Matrix::Constant(1, 6, -100.0)), 2, 3, g.constant(1.0)).data();
  EXPECT_TRUE((p.array() == kRateMin).all());
}

TEST(LowRankRates, UnclippedRatesFactorizeExactly) {
  std::mt19937_64 rng(3);
  const Index k = 5;
  const Index d = 4;
  const Matrix logits = random_matrix(1, k + d + 1, rng, -3.0, 3.0);
  const double tau = 0.7;
  Graph g;
  const Matrix p = low_rank_rates(g.constant(logits), k, d, g.constant(tau), false).data();
  const Matrix factors = tempered_sigmoid(g.constant(logits), g.constant(tau)).data();
  auto s = [tau](double x) { return 1.0 / (1.0 + std::exp(-x / tau)); };
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < d; ++j) {
      EXPECT_EQ(p(i, j), factors(0, i) * factors(0, k + j) * factors(0, k + d));
      EXPECT_NEAR(p(i, j), s(logits(0, i)) * s(logits(0, k + j)) * s(logits(0, k + d)), 1e-15);
    }
  }
  // The matrix has rank one.
  Eigen::JacobiSVD<Matrix> svd(p);
  EXPECT_LT(svd.singularValues()(1), 1e-12 * svd.singularValues()(0));
}

TEST(LowRankRates, WrongLogitWidthIsAnError) {
  Graph g;
  EXPECT_THROW(low_rank_rates(g.constant(Matrix::Zero(1, 7)), 4, 4, g.constant(1.0)),
               diff::ShapeError);
}

TEST(KlConditional, IdenticalRatesGiveZero) {
  for (double p : {0.01, 0.2, 0.5, 0.77, 0.99}) EXPECT_EQ(kl_entry(p, p), 0.0);
}

TEST(KlConditional, MatchesGaussianOracleAndIgnoresTheta) {
  for (auto [p, q] : {std::pair{0.5, 0.25}, std::pair{0.1, 0.6}, std::pair{0.99, 0.01}}) {
    for (double theta : {0.5, 1.0, 2.0, -3.0}) {
      EXPECT_NEAR(kl_entry(p, q), dropout_kl_oracle(p, q, theta), 1e-10);
    }
  }
}

TEST(KlConditional, ExtremePairIsLargeButFinite) {
  // Equal variances 0.0099, mean gap 0.98 theta:
  // (0.0099 + 0.9604) / (2 * 0.0099) - 0.5
  EXPECT_NEAR(kl_entry(0.99, 0.01), 0.9703 / 0.0198 - 0.5, 1e-10);
  EXPECT_NEAR(kl_entry(0.99, 0.01), 48.5051, 1e-4);
}

TEST(KlConditional, NonNegativeOnRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(kRateMin, kRateMax);
  Matrix p(50, 20);
  Matrix q(50, 20);
  for (Index i = 0; i < p.size(); ++i) {
    p(i) = u(rng);
    q(i) = u(rng);
  }
  for (Index i = 0; i < p.size(); ++i) EXPECT_GE(kl_entry(p(i), q(i)), 0.0);
}

TEST(KlConditional, SumsOverLayers) {
  Graph g;
  DropoutRates a;
  DropoutRates b;
  a.layers = {g.constant(Matrix::Constant(2, 2, 0.3)), g.constant(Matrix::Constant(1, 3, 0.5))};
  b.layers = {g.constant(Matrix::Constant(2, 2, 0.6)), g.constant(Matrix::Constant(1, 3, 0.2))};
  const double expected = 4 * kl_entry(0.3, 0.6) + 3 * kl_entry(0.5, 0.2);
  EXPECT_NEAR(kl_conditional(a, b).scalar(), expected, 1e-12);
  b.layers.pop_back();
  EXPECT_THROW(kl_conditional(a, b), diff::ShapeError);
}

TEST(SampleWeights, MonteCarloMomentsMatchPosterior) {
  const double theta = 1.7;
  const double p = 0.3;
  const int n = 200000;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  Matrix eps(1, n);
  for (int i = 0; i < n; ++i) eps(0, i) = z(rng);
  Graph g;
  const Matrix w = sample_weights(g.constant(Matrix::Constant(1, n, theta)),
                                  g.constant(Matrix::Constant(1, n, p)), g.constant(eps))
                       .data();
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  EXPECT_NEAR(mean, (1 - p) * theta, 4 * std::sqrt(p * (1 - p)) * theta / std::sqrt(n));
  EXPECT_NEAR(var / (p * (1 - p) * theta * theta), 1.0, 0.02);
}

TEST(LocalReparam, ZeroNoiseGivesMeanPreactivation) {
  std::mt19937_64 rng(5);
  const Matrix a = random_matrix(3, 4, rng);
  const Matrix theta = random_matrix(4, 2, rng);
  const Matrix bias = random_matrix(1, 2, rng);
  const Matrix p = random_matrix(4, 2, rng, 0.05, 0.95);
  Graph g;
  const Matrix b = local_reparam_forward(g.constant(a), g.constant(theta), g.constant(bias),
                                         g.constant(p), g.constant(Matrix::Zero(3, 2)))
                       .data();
  const Matrix expected =
      (a * (Matrix::Ones(4, 2) - p).cwiseProduct(theta)).rowwise() + bias.row(0);
  EXPECT_LT((b - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MetaModel, RatesArePermutationInvariantAndInRange) {
  ParamRegistry reg;
  Rng rng(9);
  SetEncoder enc(reg, "enc", 1, 1, 8, 2, rng);
  MetaModel meta(reg, "meta", 8, {{1, 6}, {6, 1}}, {8}, Activation::leaky_relu, rng);
  const Matrix xs = random_matrix(9, 1, rng);
  const Matrix ys = random_matrix(9, 1, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(9);
  perm.setIdentity();
  perm.indices().reverseInPlace();
  Graph g;
  const auto a = meta.predict_rates(g, enc.encode(g, xs, ys), RateSource::context).values();
  const auto b =
      meta.predict_rates(g, enc.encode(g, perm * xs, perm * ys), RateSource::context).values();
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].rows(), 1);
  EXPECT_EQ(a[0].cols(), 6);
  EXPECT_EQ(a[1].rows(), 6);
  EXPECT_EQ(a[1].cols(), 1);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_LE((a[l] - b[l]).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_TRUE((a[l].array() >= kRateMin).all() && (a[l].array() <= kRateMax).all());
  }
  EXPECT_NE(reg.find("meta.log_tau"), nullptr);
  EXPECT_NE(reg.find("meta.layer1.layer1.weight"), nullptr);
}
