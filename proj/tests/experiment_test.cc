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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "splitleak/experiment.h"
#include "test_util.h"

namespace splitleak {
namespace {

namespace fs = std::filesystem;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteText(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::trunc) << text;
}

// Writes a synthetic dataset as schema + CSV into `dir`.
void WriteSyntheticInputs(const fs::path& dir, std::size_t rows) {
  Dataset ds = GenerateSynthetic(DefaultSyntheticSchema(), rows, 0.4, 5, 2.0);
  WriteText(dir / "toy.schema", ds.schema.ToText());
  std::ostringstream csv;
  csv.precision(17);
  for (std::size_t f = 0; f < ds.schema.size(); ++f)
    csv << (f ? "," : "") << ds.schema[f].name;
  csv << '\n';
  for (const auto& s : ds.rows) {
    for (std::size_t f = 0; f < ds.schema.size(); ++f) {
      if (f) csv << ',';
      if (ds.schema[f].categorical())
        csv << ds.vocab.Decode(f, s.codes[f]);
      else
        csv << s.numbers[f];
    }
    csv << '\n';
  }
  WriteText(dir / "toy.csv", csv.str());
}

std::string ToyConfig(const std::string& extra_run = "") {
  return "[data]\n"
         "csv = toy.csv\n"
         "schema = toy.schema\n"
         "split_ratio = 0.8\n"
         "[model]\n"
         "embed_dim = 4\n"
         "cut_width = 6\n"
         "server_hidden = 8\n"
         "client_hidden = 10,6\n"
         "[train]\n"
         "batch_size = 32\n"
         "epochs = 2\n"
         "learning_rate = 0.05\n"
         "[attack]\n"
         "max_samples = 40\n"
         "threads = 1\n"
         "[baseline]\n"
         "k = 3\n"
         "[run]\n"
         "seed = 7\n"
         "out = out\n" +
         extra_run;
}

// Adds `line` to `section`, creating the section when it is absent.
std::string With(std::string text, const std::string& section,
                 const std::string& line) {
  std::string header = "[" + section + "]\n";
  auto at = text.find(header);
  if (at == std::string::npos) return text + header + line + "\n";
  text.insert(at + header.size(), line + "\n");
  return text;
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::ScratchDir(
        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    WriteSyntheticInputs(dir_, 300);
  }

  ExperimentConfig Config(const std::string& text) {
    WriteText(dir_ / "exp.ini", text);
    return LoadExperimentConfig(dir_ / "exp.ini");
  }

  fs::path dir_;
  std::ostringstream console_;
};

TEST_F(ExperimentTest, ParsesAllSections) {
  ExperimentConfig c = Config(ToyConfig() +
                              "[dp]\nenabled = true\nnoise_multiplier = 0.02\n"
                              "[label_dp]\nenabled = true\nflip_probability = 0.1\n");
  EXPECT_EQ(c.CsvPath(), dir_ / "toy.csv");
  EXPECT_EQ(c.train.arch.client_hidden, (std::vector<int>{10, 6}));
  EXPECT_EQ(c.train.arch.server_hidden, (std::vector<int>{8}));
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.seed, 7u);
  ASSERT_TRUE(c.train.dp.has_value());
  EXPECT_EQ(c.train.dp->noise_multiplier, 0.02);
  ASSERT_TRUE(c.train.label_dp.has_value());
  EXPECT_EQ(c.Scenario(), "Comb(p=0.1,sigma=0.02)");
  EXPECT_EQ(c.baseline_k, 3u);
}

TEST_F(ExperimentTest, UnknownKeysAndSectionsAreErrors) {
  EXPECT_THROW(Config(With(ToyConfig(), "train", "epoch = 3")), ConfigError);
  EXPECT_THROW(Config(ToyConfig() + "[trian]\nepochs = 3\n"), ConfigError);
  EXPECT_THROW(Config("epochs = 3\n" + ToyConfig()), ConfigError);
  EXPECT_THROW(Config(With(ToyConfig(), "train", "epochs = lots")), Error);
  EXPECT_THROW(Config("[data\ncsv = x\n"), ParseError);
}

TEST_F(ExperimentTest, MissingFilesAreReportedByPath) {
  ExperimentConfig c = ParseExperimentConfig(ToyConfig(), dir_);
  c.csv = "nope.csv";
  try {
    c.Validate();
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.csv"), std::string::npos);
  }
  EXPECT_THROW(LoadExperimentConfig(dir_ / "absent.ini"), ConfigError);
}

TEST_F(ExperimentTest, OversizedConfigurationSpaceIsRefused) {
  ExperimentConfig c = ParseExperimentConfig(
      With(ToyConfig(), "attack", "enumeration_cap = 50"), dir_);
  try {
    c.Validate();
    FAIL() << "expected refusal";
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("60"), std::string::npos) << msg;  // 2*5*3*2
    EXPECT_NE(msg.find("50"), std::string::npos) << msg;
  }
}

TEST_F(ExperimentTest, RunWritesAllArtifacts) {
  Experiment e(Config(ToyConfig()));
  auto records = e.Execute(Stage::kRun, console_);
  fs::path out = dir_ / "out";
  for (const char* f : {"results.jsonl", "summary.tsv", "train.log",
                        "checkpoint.bin", "attack.log", "outcomes.jsonl"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_FALSE(fs::exists(out / "INCOMPLETE"));
  auto back = ReadResults(out / "results.jsonl");
  ASSERT_EQ(back.size(), records.size());
  bool saw_auc = false, saw_exact = false, saw_knn = false;
  for (const auto& r : back) {
    saw_auc |= r.metric == "auc";
    saw_exact |= r.variant == "exact";
    saw_knn |= r.scenario == "baseline-features" && r.variant == "knn-3";
    EXPECT_EQ(r.config_hash, e.hash());
  }
  EXPECT_TRUE(saw_auc && saw_exact && saw_knn);
  std::string log = Slurp(out / "train.log");
  EXPECT_NE(log.find("best_epoch"), std::string::npos);
  EXPECT_NE(log.find("epoch 1 loss"), std::string::npos);
}

TEST_F(ExperimentTest, SameConfigSameSeedGivesIdenticalResults) {
  Experiment(Config(ToyConfig())).Execute(Stage::kRun, console_);
  std::string first = Slurp(dir_ / "out" / "results.jsonl");
  std::string ckpt = Slurp(dir_ / "out" / "checkpoint.bin");
  Experiment(Config(ToyConfig())).Execute(Stage::kRun, console_);
  EXPECT_EQ(Slurp(dir_ / "out" / "results.jsonl"), first);
  EXPECT_EQ(Slurp(dir_ / "out" / "checkpoint.bin"), ckpt);
}

TEST_F(ExperimentTest, StagedRunMatchesOneShotRun) {
  Experiment(Config(ToyConfig())).Execute(Stage::kRun, console_);
  std::string oneshot = Slurp(dir_ / "out" / "results.jsonl");
  fs::remove_all(dir_ / "out");
  Experiment staged(Config(ToyConfig()));
  staged.Execute(Stage::kTrain, console_);
  staged.Execute(Stage::kAttack, console_);
  staged.Execute(Stage::kBaseline, console_);
  EXPECT_EQ(Slurp(dir_ / "out" / "results.jsonl"), oneshot);
}

TEST_F(ExperimentTest, AttackWithoutCheckpointFails) {
  Experiment e(Config(ToyConfig()));
  EXPECT_THROW(e.Execute(Stage::kAttack, console_), ConfigError);
  EXPECT_NE(Slurp(dir_ / "out" / "INCOMPLETE").find("failed"), std::string::npos);
}

TEST_F(ExperimentTest, CheckpointFromOtherTrainingConfigIsRejected) {
  Experiment(Config(ToyConfig())).Execute(Stage::kTrain, console_);
  std::string changed = ToyConfig();
  changed.replace(changed.find("epochs = 2"), 10, "epochs = 3");
  EXPECT_THROW(Experiment(Config(changed)).Execute(Stage::kAttack, console_),
               ConfigError);
  // Attack-only settings do not invalidate the checkpoint.
  EXPECT_NO_THROW(Experiment(Config(With(With(ToyConfig(), "attack", "variant = topk"), "attack", "k = 3")))
                      .Execute(Stage::kAttack, console_));
}

TEST_F(ExperimentTest, FslLogsClientCount) {
  Experiment(Config(With(ToyConfig(), "train", "mode = fsl"))).Execute(Stage::kTrain, console_);
  // 300 rows * 0.8 = 240 train rows -> 15 clients of 16.
  EXPECT_NE(Slurp(dir_ / "out" / "train.log").find("fsl_clients 15"), std::string::npos);
}

TEST_F(ExperimentTest, RepetitionsUseConsecutiveSeeds) {
  Experiment e(Config(ToyConfig("repetitions = 2\n")));
  auto recs = e.Execute(Stage::kTrain, console_);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].seed, 7u);
  EXPECT_EQ(recs[1].seed, 8u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / CheckpointName(1)));
  auto rows = Summarize(recs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].values.size(), 2u);
}

TEST(ShippedConfigs, AllParse) {
  int seen = 0;
  for (const auto& e : std::filesystem::directory_iterator(testing::SourcePath("configs"))) {
    if (e.path().extension() != ".ini") continue;
    ++seen;
    SCOPED_TRACE(e.path().string());
    ExperimentConfig c;
    ASSERT_NO_THROW(c = LoadExperimentConfig(e.path()));
    EXPECT_TRUE(std::filesystem::exists(c.SchemaPath()));
    EXPECT_EQ(c.split_ratio, 0.9);
    EXPECT_EQ(c.train.seed, 42u);
  }
  EXPECT_GE(seen, 5);
}

TEST(Records, MergeKeepsFirstAppearanceOrderAndUpserts) {
  ResultRecord a{"SL", "-", "auc", "-", 0, 0.9, 1, 0, "h"};
  ResultRecord b{"SL", "exact", "f1", "sex", 2, 1.0, 1, 0, "h"};
  ResultRecord b2 = b;
  b2.value = 0.5;
  ResultRecord c{"DP(0.01)", "-", "auc", "-", 0, 0.88, 1, 0, "g"};
  auto merged = MergeResults({a, b}, std::vector<ResultRecord>{c, b2});
  ASSERT_EQ(merged.size(), 3u);
  EXPECT_EQ(merged[0].Key(), a.Key());
  EXPECT_EQ(merged[1].value, 0.5);
  EXPECT_EQ(merged[2].scenario, "DP(0.01)");
}

TEST(Records, JsonRoundTripAndReport) {
  auto dir = testing::ScratchDir("records");
  std::vector<ResultRecord> r1 = {{"SL", "-", "auc", "-", 0, 0.9, 1, 0, "h"}};
  std::vector<ResultRecord> r2 = {{"SL", "-", "auc", "-", 0, 0.8, 2, 1, "h"},
                                  {"FSL", "-", "auc", "-", 0, 0.7, 1, 0, "k"}};
  fs::create_directories(dir / "a");
  WriteResults(dir / "a" / "results.jsonl", r1);
  WriteResults(dir / "b.jsonl", r2);
  std::vector<fs::path> inputs = {dir / "a", dir / "b.jsonl"};
  auto merged = MergeRuns(inputs);
  ASSERT_EQ(merged.size(), 3u);
  EXPECT_EQ(merged[1].seed, 2u);
  auto rows = Summarize(merged);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[0].Mean(), 0.85, 1e-15);
  EXPECT_NEAR(rows[0].Std(), std::sqrt(0.005), 1e-15);
  std::string tsv = FormatSummary(rows);
  EXPECT_EQ(tsv.substr(0, tsv.find('\t')), "config_hash");
  WriteText(dir / "bad.jsonl", "{not json\n");
  EXPECT_THROW(ReadResults(dir / "bad.jsonl"), ParseError);
}

}  // namespace
}  // namespace splitleak
