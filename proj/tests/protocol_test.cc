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
#include <limits>
#include <vector>

#include "splitleak/protocol.h"
#include "monolith.h"
#include "test_util.h"

namespace splitleak {
namespace {

TrainConfig SmallConfig() {
  TrainConfig c;
  c.arch = testing::SmallArch();
  c.arch.embedding_init_stddev = 0.1;
  c.batch_size = 32;
  c.epochs = 5;
  c.seed = 17;
  c.learning_rate = 0.05;
  return c;
}

TEST(SplitTraining, EqualsMonolithicNetworkOverFiveEpochs) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 600, 0.4, 1);
  SplitIndices split = SplitTrainTest(ds, 0.8, 1);
  EXPECT_EQ(testing::SplitVersusMonolith(ds, split, SmallConfig()), 0.0);
}

TEST(SplitTraining, LearnsThePlantedModel) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 3000, 0.4, 2, 2.0);
  SplitIndices split = SplitTrainTest(ds, 0.8, 2);
  TrainResult r = Train(ds, split, SmallConfig());
  EXPECT_GT(r.log.epochs.back().test_auc, 0.8);
  EXPECT_LT(r.log.epochs.back().train_loss, r.log.epochs.front().train_loss);
  ASSERT_GE(r.log.best_epoch, 0);
  double best = r.log.epochs[static_cast<std::size_t>(r.log.best_epoch)].test_auc;
  for (const auto& e : r.log.epochs) EXPECT_LE(e.test_auc, best);
  EXPECT_NEAR(EvaluateAuc(r.server, r.client, ds, split.test), best, 1e-12);
}

TEST(SplitTraining, ZeroEpochsScoresNearChance) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 4000, 0.5, 3, 2.0);
  SplitIndices split = SplitTrainTest(ds, 0.5, 3);
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 0;
  TrainResult r = Train(ds, split, cfg);
  EXPECT_EQ(r.log.best_epoch, -1);
  EXPECT_EQ(r.log.steps, 0u);
  EXPECT_NEAR(EvaluateAuc(r.server, r.client, ds, split.test), 0.5, 0.1);
}

TEST(SplitTraining, SameSeedIsBitIdentical) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 500, 0.3, 4);
  SplitIndices split = SplitTrainTest(ds, 0.8, 4);
  TrainConfig cfg = SmallConfig();
  cfg.dp = DpConfig{};
  cfg.label_dp = LabelDpConfig{0.1};
  TrainResult a = Train(ds, split, cfg), b = Train(ds, split, cfg);
  EXPECT_EQ(a.server.trunk.layers()[0].weight, b.server.trunk.layers()[0].weight);
  EXPECT_EQ(a.client.head.layers()[1].weight, b.client.head.layers()[1].weight);
  cfg.seed += 1;
  TrainResult c = Train(ds, split, cfg);
  EXPECT_NE(a.client.head.layers()[1].weight, c.client.head.layers()[1].weight);
}

TEST(Fsl, PartitionCoversTrainRowsInGroupsOfSixteen) {
  std::vector<std::size_t> train(10000);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = 3 * i;
  auto clients = PartitionClients(train, 16, 5);
  EXPECT_EQ(clients.size(), 625u);
  std::vector<std::size_t> all;
  for (const auto& c : clients) {
    EXPECT_EQ(c.size(), 16u);
    EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
    all.insert(all.end(), c.begin(), c.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, train);
  EXPECT_EQ(PartitionClients(std::vector<std::size_t>(20, 0), 16, 5).back().size(), 4u);
}

TEST(Fsl, OneClientReplaysSlWithItsBatchSize) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 20, 0.5, 6);
  SplitIndices split;
  for (std::size_t i = 0; i < 16; ++i) split.train.push_back(i);
  for (std::size_t i = 16; i < 20; ++i) split.test.push_back(i);
  TrainConfig sl = SmallConfig();
  sl.batch_size = 16;
  sl.keep_best_epoch = false;
  TrainConfig fsl = sl;
  fsl.mode = TrainingMode::kFsl;
  TrainResult a = Train(ds, split, sl), b = Train(ds, split, fsl);
  EXPECT_EQ(b.log.client_count, 1u);
  EXPECT_EQ(a.server.trunk.layers()[0].weight, b.server.trunk.layers()[0].weight);
  EXPECT_EQ(a.client.head.layers()[0].weight, b.client.head.layers()[0].weight);
}

TEST(Fsl, CountsClientsAndSteps) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 1000, 0.4, 7);
  SplitIndices split = SplitTrainTest(ds, 0.8, 7);
  TrainConfig cfg = SmallConfig();
  cfg.mode = TrainingMode::kFsl;
  cfg.epochs = 2;
  TrainResult r = Train(ds, split, cfg);
  EXPECT_EQ(r.log.client_count, 50u);
  EXPECT_EQ(r.log.steps, 100u);
  EXPECT_EQ(r.log.batch_size, 16);
}

TEST(Messages, ZeroClientHeadSendsZeroGradients) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 8, 0.5, 8);
  TrainConfig cfg = SmallConfig();
  Rng init(1, streams::kInit);
  ServerModel s =
      InitServerModel(ds.schema, cfg.arch, FitScalers(ds, testing::AllRows(ds)), init);
  ClientModel c = InitClientModel(ds.schema, cfg.arch, init);
  for (auto& l : c.head.mutable_layers()) l.weight.setZero();
  ServerParty server(s, 0.01, 1e-8);
  ClientParty client(c, 0.01, 1e-8, std::nullopt, 1);
  auto rows = testing::AllRows(ds);
  std::vector<int> y;
  for (std::size_t r : rows) y.push_back(ds.Label(r));
  BatchOutcome o = RunBatch(server, client, MakeBatch(ds, rows, y));
  ASSERT_EQ(o.gradients.size(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    EXPECT_EQ(o.gradients[j].sample_id, rows[j]);
    EXPECT_EQ(o.gradients[j].cut_gradient.values.norm(), 0.0);
  }
}

TEST(Messages, ServerRejectsMismatchedReplies) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 4, 0.5, 9);
  TrainConfig cfg = SmallConfig();
  Rng init(1, streams::kInit);
  ServerParty server(
      InitServerModel(ds.schema, cfg.arch, FitScalers(ds, testing::AllRows(ds)), init),
      0.01, 1e-8);
  auto rows = testing::AllRows(ds);
  std::vector<ServerFeatures> f;
  for (std::size_t r : rows) f.push_back(ds.ServerView(r));
  auto acts = server.Forward(rows, f);
  std::vector<GradientMessage> g;
  for (const auto& a : acts) g.push_back({a.sample_id, {Vector::Zero(6)}});
  std::swap(g[0], g[1]);
  EXPECT_THROW(server.Receive(g), DimensionError);
  g.pop_back();
  EXPECT_THROW(server.Receive(g), DimensionError);
}

TEST(Dp, NoNoiseAndUnboundedClipEqualsPlainTraining) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 400, 0.4, 10);
  SplitIndices split = SplitTrainTest(ds, 0.8, 10);
  TrainConfig plain = SmallConfig();
  plain.epochs = 2;
  TrainConfig dp = plain;
  dp.dp = DpConfig{};
  dp.dp->noise_multiplier = 0.0;
  dp.dp->clip_mode = ClipMode::kFixed;
  dp.dp->fixed_clip = std::numeric_limits<double>::max();
  TrainResult a = Train(ds, split, plain), b = Train(ds, split, dp);
  EXPECT_EQ(a.server.trunk.layers()[0].weight, b.server.trunk.layers()[0].weight);
  EXPECT_EQ(a.client.head.layers()[0].weight, b.client.head.layers()[0].weight);
}

TEST(Dp, AdaptiveClipTrackerSeesEveryTrainingGradient) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 300, 0.4, 11);
  SplitIndices split = SplitTrainTest(ds, 0.8, 11);
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 3;
  cfg.keep_best_epoch = false;
  cfg.dp = DpConfig{};
  TrainResult r = Train(ds, split, cfg);
  ASSERT_TRUE(r.clip.has_value());
  EXPECT_EQ(r.clip->observed(), 3 * split.train.size());
  EXPECT_GT(r.clip->median_estimate(), 0.0);
}

TEST(LabelDp, LabelsAreFlippedOnceAndReproducibly) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 20000, 0.5, 12);
  auto rows = testing::AllRows(ds);
  TrainConfig cfg = SmallConfig();
  cfg.label_dp = LabelDpConfig{0.1};
  std::size_t flipped = 0;
  auto a = ClientTrainingLabels(ds, rows, cfg, &flipped);
  auto b = ClientTrainingLabels(ds, rows, cfg);
  EXPECT_EQ(a, b);
  std::size_t differ = 0;
  for (std::size_t r : rows) differ += a[r] != ds.Label(r);
  EXPECT_EQ(differ, flipped);
  EXPECT_NEAR(static_cast<double>(flipped) / 20000.0, 0.1, 0.006);
  // Training consumes the flipped labels and logs how many there were.
  SplitIndices split = SplitTrainTest(ds, 0.9, 12);
  cfg.epochs = 1;
  TrainResult r = Train(ds, split, cfg);
  std::size_t expect = 0;
  ClientTrainingLabels(ds, split.train, cfg, &expect);
  EXPECT_EQ(r.log.flipped_labels, expect);
}

TEST(Errors, DivergentTrainingIsReported) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 200, 0.5, 13);
  SplitIndices split = SplitTrainTest(ds, 0.8, 13);
  TrainConfig cfg = SmallConfig();
  cfg.learning_rate = 1e300;
  EXPECT_THROW(Train(ds, split, cfg), NumericError);
}

TEST(Errors, InvalidConfigsAreRejected) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 50, 0.5, 14);
  SplitIndices split = SplitTrainTest(ds, 0.8, 14);
  TrainConfig cfg = SmallConfig();
  cfg.batch_size = 0;
  EXPECT_THROW(Train(ds, split, cfg), ConfigError);
  cfg = SmallConfig();
  cfg.label_dp = LabelDpConfig{0.5};
  EXPECT_THROW(Train(ds, split, cfg), ConfigError);
  EXPECT_THROW(Train(ds, SplitIndices{}, SmallConfig()), ConfigError);
}

TEST(Observation, MatchesTrainingMessagesWithoutDp) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), 100, 0.5, 15);
  SplitIndices split = SplitTrainTest(ds, 0.8, 15);
  TrainConfig cfg = SmallConfig();
  cfg.epochs = 1;
  TrainResult r = Train(ds, split, cfg);
  auto obs = ObserveGradients(r.server, r.client, ds, split.test, cfg, r.clip);
  ASSERT_EQ(obs.size(), split.test.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    std::size_t row = split.test[k];
    CutActivation a = ForwardServer(r.server, ds.ServerView(row));
    BackwardResult b = BackwardClient(r.client, a, ds.ClientView(row), ds.Label(row));
    EXPECT_EQ(obs[k].sample_id, row);
    EXPECT_EQ(obs[k].gradient.values, b.cut_gradient.values);
  }
}

}  // namespace
}  // namespace splitleak
