// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "nvdp/nets.hpp"
#include "nvdp/setenc.hpp"
#include "test_util.hpp"

using namespace nvdp;

TEST(TemperedSigmoid, KnownValues) {
  Graph g;
  EXPECT_DOUBLE_EQ(tempered_sigmoid(g.constant(0.0), g.constant(0.3)).scalar(), 0.5);
  EXPECT_NEAR(tempered_sigmoid(g.constant(std::log(3.0)), g.constant(1.0)).scalar(), 0.75, 1e-15);
  EXPECT_NEAR(tempered_sigmoid(g.constant(1.0), g.constant(0.5)).scalar(),
              1.0 / (1.0 + std::exp(-2.0)), 1e-15);
}

TEST(TemperedSigmoid, StaysInsideOpenUnitInterval) {
  Graph g;
  Matrix x(1, 4);
  x << -30.0, -5.0, 5.0, 30.0;
  const Matrix s = tempered_sigmoid(g.constant(x), g.constant(1.0)).data();
  EXPECT_TRUE((s.array() > 0.0).all());
  EXPECT_TRUE((s.array() < 1.0).all());
}

TEST(Temperature, StoredAsLogAndInitializedToOne) {
  ParamRegistry reg;
  Temperature t(reg, "tau");
  EXPECT_DOUBLE_EQ(t.value(), 1.0);
  ASSERT_NE(reg.find("tau"), nullptr);
  reg.find("tau")->value(0, 0) = std::log(0.25);
  EXPECT_NEAR(t.value(), 0.25, 1e-15);
}

TEST(Mish, KnownValues) {
  Graph g;
  EXPECT_DOUBLE_EQ(mish(g.constant(0.0)).scalar(), 0.0);
  EXPECT_NEAR(mish(g.constant(20.0)).scalar(), 20.0, 1e-9);
  // 1 * tanh(ln(1 + e))
  EXPECT_NEAR(mish(g.constant(1.0)).scalar(), std::tanh(std::log1p(std::exp(1.0))), 1e-15);
  EXPECT_NEAR(mish(g.constant(1.0)).scalar(), 0.86509838, 1e-8);
}

TEST(Activations, LeakyReluSlope) {
  Graph g;
  EXPECT_DOUBLE_EQ(activate(g.constant(-2.0), Activation::leaky_relu).scalar(), -0.02);
  EXPECT_DOUBLE_EQ(activate(g.constant(-2.0), Activation::relu).scalar(), 0.0);
  EXPECT_DOUBLE_EQ(activate(g.constant(-2.0), Activation::none).scalar(), -2.0);
}

TEST(GaussianHead, SigmaTransformAtZero) {
  Graph g;
  Matrix out(1, 2);
  out << 0.3, 0.0;
  const Gaussian p = split_mean_logstd(g.constant(out));
  EXPECT_DOUBLE_EQ(p.mu.scalar(), 0.3);
  EXPECT_NEAR(p.sigma.scalar(), 0.1 + 0.9 * std::log(2.0), 1e-15);
  EXPECT_NEAR(p.sigma.scalar(), 0.7238, 1e-4);
}

TEST(GaussianHead, SigmaNeverBelowFloor) {
  Graph g;
  Matrix out(1, 2);
  out << 0.0, -1000.0;
  EXPECT_GE(split_mean_logstd(g.constant(out)).sigma.scalar(), kSigmaFloor);
}

TEST(Mlp, IdentityLayerPassesInputThrough) {
  ParamRegistry reg;
  Rng rng(1);
  MlpSpec spec{{3, 3}, Activation::none};
  Mlp mlp(reg, "m", spec, rng);
  reg.find("m.layer0.weight")->value.setIdentity();
  reg.find("m.layer0.bias")->value.setZero();
  Graph g;
  Matrix x(2, 3);
  x << 1, 2, 3, -4, 5, -6;
  EXPECT_EQ(mlp.forward(g, g.constant(x)).data(), x);
}

TEST(Mlp, ZeroWeightsGiveBias) {
  ParamRegistry reg;
  Rng rng(1);
  Mlp mlp(reg, "m", MlpSpec{{2, 4, 1}, Activation::relu}, rng);
  for (Parameter* p : reg.all()) p->value.setZero();
  reg.find("m.layer1.bias")->value(0, 0) = 0.5;
  Graph g;
  const Matrix y = mlp.forward(g, g.constant(Matrix::Ones(3, 2))).data();
  EXPECT_TRUE((y.array() == 0.5).all());
}

TEST(Mlp, ParameterNamesAndGlorotBounds) {
  ParamRegistry reg;
  Rng rng(2);
  Mlp mlp(reg, "dec", MlpSpec{{5, 64, 1}, Activation::relu}, rng);
  ASSERT_EQ(reg.size(), 4u);
  const Parameter* w = reg.find("dec.layer0.weight");
  ASSERT_NE(w, nullptr);
  const double bound = std::sqrt(6.0 / (5 + 64));
  EXPECT_LE(w->value.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(w->value.cwiseAbs().maxCoeff(), 0.5 * bound);
  EXPECT_TRUE(reg.find("dec.layer0.bias")->value.isZero());
  EXPECT_EQ(reg.scalar_count(), 5u * 64 + 64 + 64 + 1);
}

TEST(ParamRegistry, DuplicateNamesRejected) {
  ParamRegistry reg;
  reg.add("a", 1, 1);
  EXPECT_THROW(reg.add("a", 2, 2), std::invalid_argument);
}

TEST(MlpSpec, ValidationRejectsBadWidths) {
  EXPECT_THROW((MlpSpec{{3}, Activation::relu}.validate()), std::invalid_argument);
  EXPECT_THROW((MlpSpec{{3, 0, 1}, Activation::relu}.validate()), std::invalid_argument);
  EXPECT_THROW((MlpSpec{{3, 1}, Activation::relu, OutputHead::split_mean_logstd}.validate()),
               std::invalid_argument);
}

namespace {

struct EncoderFixture {
  ParamRegistry reg;
  Rng rng{4};
  SetEncoder enc{reg, "enc", 1, 1, 16, 3, rng};
  Matrix xs;
  Matrix ys;
  EncoderFixture() {
    xs = nvdp::testing::random_matrix(7, 1, rng, -2.0, 2.0);
    ys = nvdp::testing::random_matrix(7, 1, rng);
  }
  Matrix encode(const Matrix& x, const Matrix& y) {
    Graph g;
    return enc.encode(g, x, y).r.data();
  }
};

}  // namespace

TEST(SetEncoder, PermutationInvariant) {
  EncoderFixture f;
  const Matrix r = f.encode(f.xs, f.ys);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
  perm.indices() << 3, 6, 0, 1, 5, 2, 4;
  const Matrix rp = f.encode(perm * f.xs, perm * f.ys);
  EXPECT_LE((r - rp).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(r.rows(), 1);
  EXPECT_EQ(r.cols(), 16);
}

TEST(SetEncoder, DuplicatingEverySetIsInvariant) {
  EncoderFixture f;
  Matrix x2(14, 1);
  Matrix y2(14, 1);
  x2 << f.xs, f.xs;
  y2 << f.ys, f.ys;
  EXPECT_LE((f.encode(f.xs, f.ys) - f.encode(x2, y2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SetEncoder, SinglePairEqualsItsFeatures) {
  EncoderFixture f;
  const Matrix x = f.xs.topRows(1);
  const Matrix y = f.ys.topRows(1);
  Graph g;
  const Matrix h = f.enc.features(g, x, y).data();
  EXPECT_EQ(f.encode(x, y), h);
}

TEST(SetEncoder, SubsetPoolingMatchesSeparateEncoding) {
  EncoderFixture f;
  Graph g;
  Value feats = f.enc.features(g, f.xs, f.ys);
  const std::size_t rows[] = {0, 1, 2};
  const Matrix pooled = SetEncoder::pool(feats, rows).r.data();
  EXPECT_LE((pooled - f.encode(f.xs.topRows(3), f.ys.topRows(3))).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SetEncoder, EmptySetIsAnError) {
  EncoderFixture f;
  Graph g;
  EXPECT_THROW(f.enc.encode(g, Matrix(0, 1), Matrix(0, 1)), std::invalid_argument);
  EXPECT_THROW(f.enc.encode(g, Matrix::Ones(3, 1), Matrix::Ones(2, 1)), std::invalid_argument);
}
