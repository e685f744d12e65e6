/*
 * Copyright 2026 The splitleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "splitleak/nn.h"
#include "splitleak/selftest.h"
#include "test_util.h"

namespace splitleak {
namespace {

// Deterministic weights shared with tests/oracles/forward_oracle.py.
Matrix W(int rows, int cols, int salt) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = 0.5 * std::sin(1.0 + 7.0 * r + 3.0 * c + 11.0 * salt);
  return m;
}

Vector B(int rows, int salt) {
  Vector v(rows);
  for (int i = 0; i < rows; ++i) v(i) = 0.1 * std::cos(i + 5.0 * salt);
  return v;
}

struct FixtureModel {
  ServerModel server;
  ClientModel client;
};

FixtureModel MakeFixture() {
  FixtureModel f;
  f.server.embeddings.dim = 2;
  f.server.embeddings.tables = {W(3, 2, 1)};
  f.server.scalers = {NumericScaler{1.0, 2.0}};
  f.server.trunk = DenseStack({{W(4, 3, 2), B(4, 2), Activation::kRelu},
                               {W(2, 4, 3), B(2, 3), Activation::kIdentity}});
  f.client.cut_width = 2;
  f.client.embeddings.dim = 2;
  f.client.embeddings.tables = {W(2, 2, 4)};
  f.client.head = DenseStack({{W(3, 4, 5), B(3, 5), Activation::kRelu},
                              {W(1, 3, 6), B(1, 6), Activation::kIdentity}});
  return f;
}

struct OracleCase {
  int server_code;
  double number;
  int client_code;
  int label;
  double a0, a1, p, loss, g0, g1;
};

// Printed by tests/oracles/forward_oracle.py.
const OracleCase kOracle[] = {
    {0, 3.0, 1, 1, -0.075968791285882131, -0.095765948032338469,
     0.48487478073160817, 0.72386460543843567, 0.067448887858040124,
     -0.058984449500887062},
    {2, -1.5, 0, 0, -0.11565674945836224, -0.10587805520950719,
     0.48968068370439261, 0.67271863880555149, -0.064117259815651625,
     0.056070921164651066},
};

TEST(Forward, MatchesIndependentNumpyOracle) {
  FixtureModel m = MakeFixture();
  for (const auto& c : kOracle) {
    ServerFeatures s{{c.server_code}, {c.number}};
    ClientFeatures cf{{c.client_code}};
    CutActivation a = ForwardServer(m.server, s);
    EXPECT_NEAR(a.values(0), c.a0, 1e-12);
    EXPECT_NEAR(a.values(1), c.a1, 1e-12);
    ClientForwardResult fw = ForwardClient(m.client, a, cf, c.label);
    EXPECT_NEAR(fw.probability, c.p, 1e-12);
    EXPECT_NEAR(fw.loss, c.loss, 1e-12);
    BackwardResult bw = BackwardClient(m.client, a, cf, c.label);
    EXPECT_NEAR(bw.cut_gradient.values(0), c.g0, 1e-12);
    EXPECT_NEAR(bw.cut_gradient.values(1), c.g1, 1e-12);
    EXPECT_NEAR(bw.loss, c.loss, 1e-12);
  }
}

TEST(Backward, CentralDifferencesOverHundredTrials) {
  EXPECT_LT(selftest::GradientCheck(100, 21), 1e-4);
}

TEST(Backward, LinearHeadCutGradientIsClosedForm) {
  Rng rng(5, 0);
  const int d = 5, e = 3;
  ClientModel c;
  c.cut_width = d;
  c.embeddings.dim = e;
  c.embeddings.tables = {Matrix::NullaryExpr(4, e, [&] { return rng.Normal(); })};
  Matrix w = Matrix::NullaryExpr(1, d + e, [&] { return rng.Normal(); });
  c.head = DenseStack({{w, Vector::Constant(1, 0.3), Activation::kIdentity}});
  for (int y : {0, 1}) {
    CutActivation a{Vector::NullaryExpr(d, [&] { return rng.Normal(); })};
    ClientFeatures cf{{2}};
    BackwardResult r = BackwardClient(c, a, cf, y);
    Vector expected = (r.probability - y) * w.leftCols(d).transpose();
    EXPECT_LT((r.cut_gradient.values - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  FixtureModel m = MakeFixture();
  ServerFeatures s{{1}, {0.5}};
  ServerGrads g = BackwardServer(m.server, s, CutGradient{Vector::Zero(2)});
  for (auto v : g.Views())
    for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Backward, IdentityTrunkPassesCutGradientToEmbedding) {
  ServerModel s;
  s.embeddings.dim = 3;
  s.embeddings.tables = {W(4, 3, 7)};
  s.trunk = DenseStack({{Matrix::Identity(3, 3), Vector::Zero(3),
                         Activation::kIdentity}});
  CutGradient g{Vector::LinSpaced(3, -1.0, 2.0)};
  ServerGrads grads = BackwardServer(s, ServerFeatures{{2}, {}}, g);
  EXPECT_EQ(Vector(grads.embeddings[0].row(2).transpose()), g.values);
  EXPECT_EQ(grads.embeddings[0].row(0).norm(), 0.0);
}

TEST(Backward, BatchGradientIsMeanOfPerSampleGradients) {
  FixtureModel m = MakeFixture();
  std::vector<ClientFeatures> batch = {{{0}}, {{1}}, {{1}}};
  std::vector<int> labels = {1, 0, 1};
  Matrix cut(2, 3);
  cut << 0.1, -0.4, 0.7, 0.3, 0.2, -0.5;
  ClientBatchResult r = BackwardClient(m.client, cut, batch, labels);
  ClientGrads sum = m.client.ZeroGrads();
  for (int j = 0; j < 3; ++j) {
    BackwardResult one =
        BackwardClient(m.client, CutActivation{cut.col(j)}, batch[j], labels[j]);
    EXPECT_LT((r.cut_gradients.col(j) - one.cut_gradient.values).norm(), 1e-15);
    for (std::size_t l = 0; l < sum.head.weight.size(); ++l)
      sum.head.weight[l] += one.client_grads.head.weight[l] / 3.0;
  }
  for (std::size_t l = 0; l < sum.head.weight.size(); ++l)
    EXPECT_LT((sum.head.weight[l] - r.grads.head.weight[l]).norm(), 1e-15);
}

TEST(Loss, LogitGradientIsStableAndMatchesPMinusY) {
  for (double z : {-3.0, -0.2, 0.0, 0.7, 5.0}) {
    EXPECT_NEAR(LogitGradient(z, 1), Sigmoid(z) - 1.0, 1e-15);
    EXPECT_NEAR(LogitGradient(z, 0), Sigmoid(z), 1e-15);
  }
  // p - 1 would round to 0 here; the stable form keeps the tail.
  EXPECT_GT(-LogitGradient(40.0, 1), 0.0);
  EXPECT_NEAR(-LogitGradient(40.0, 1), std::exp(-40.0), 1e-30);
}

TEST(Loss, CrossEntropyIsNonNegativeAndClamped) {
  for (double p : {0.0, 1e-12, 0.3, 0.5, 0.9, 1.0})
    for (int y : {0, 1}) {
      double l = BinaryCrossEntropy(p, y);
      EXPECT_GE(l, 0.0);
      EXPECT_TRUE(std::isfinite(l));
    }
  EXPECT_NEAR(BinaryCrossEntropy(0.5, 1), std::log(2.0), 1e-15);
}

TEST(Adagrad, FirstStepsMatchHandComputation) {
  std::vector<double> p = {1.0, 2.0};
  std::vector<double> g = {3.0, 0.0};
  std::vector<std::span<double>> params = {p};
  std::vector<std::span<const double>> grads = {g};
  AdagradState st;
  AdagradStep(params, grads, st);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0], 0.99, 1e-10);
  EXPECT_EQ(p[1], 2.0);
  double before = p[0];
  AdagradStep(params, grads, st);
  EXPECT_NEAR(before - p[0], 0.01 / std::sqrt(2.0), 1e-10);
  EXPECT_EQ(st.accumulators[0][0], 18.0);
}

TEST(Adagrad, RejectsMismatchedShapes) {
  std::vector<double> p = {1.0, 2.0}, g = {1.0};
  std::vector<std::span<double>> params = {p};
  std::vector<std::span<const double>> grads = {g};
  AdagradState st;
  EXPECT_THROW(AdagradStep(params, grads, st), DimensionError);
}

TEST(Shapes, MismatchesAreReported) {
  FixtureModel m = MakeFixture();
  EXPECT_THROW(ForwardServer(m.server, ServerFeatures{{0}, {}}), SchemaError);
  EXPECT_THROW(ForwardServer(m.server, ServerFeatures{{3}, {1.0}}), SchemaError);
  EXPECT_THROW(ForwardClient(m.client, CutActivation{Vector::Zero(3)},
                             ClientFeatures{{0}}, 1),
               DimensionError);
  EXPECT_THROW(ForwardClient(m.client, CutActivation{Vector::Zero(2)},
                             ClientFeatures{{0}}, 2),
               SchemaError);
  EXPECT_THROW(BackwardServer(m.server, ServerFeatures{{0}, {1.0}},
                              CutGradient{Vector::Zero(5)}),
               DimensionError);
  EXPECT_THROW(DenseStack({{Matrix::Zero(2, 3), Vector::Zero(3),
                            Activation::kRelu}}),
               DimensionError);
}

TEST(Init, SameSeedSameModel) {
  FeatureSchema schema = DefaultSyntheticSchema();
  Dataset ds = GenerateSynthetic(schema, 50, 0.5, 3);
  auto scalers = FitScalers(ds, testing::AllRows(ds));
  Rng r1(9, streams::kInit), r2(9, streams::kInit), r3(10, streams::kInit);
  ServerModel a = InitServerModel(schema, testing::SmallArch(), scalers, r1);
  ServerModel b = InitServerModel(schema, testing::SmallArch(), scalers, r2);
  ServerModel c = InitServerModel(schema, testing::SmallArch(), scalers, r3);
  EXPECT_EQ(a.trunk.layers()[0].weight, b.trunk.layers()[0].weight);
  EXPECT_NE(a.trunk.layers()[0].weight, c.trunk.layers()[0].weight);
  EXPECT_EQ(a.cut_width(), 6);
}

}  // namespace
}  // namespace splitleak
