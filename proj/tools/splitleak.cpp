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

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "splitleak/experiment.h"
#include "splitleak/selftest.h"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<double> dp_sigma;
  std::optional<double> labeldp_p;
  std::optional<std::string> variant;
  std::optional<std::size_t> k;
  std::optional<std::size_t> max_samples;
};

void AddRunFlags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--mode", o.mode, "training mode")
      ->check(CLI::IsMember({"sl", "fsl"}));
  cmd->add_option("--dp-sigma", o.dp_sigma,
                  "enable cut-gradient DP with this noise multiplier");
  cmd->add_option("--labeldp-p", o.labeldp_p,
                  "enable label DP with this flip probability");
  cmd->add_option("--variant", o.variant, "attack variant")
      ->check(CLI::IsMember({"exact", "topk"}));
  cmd->add_option("--k", o.k, "top-k vote size (also baseline k)");
  cmd->add_option("--max-samples", o.max_samples,
                  "attack at most N test samples (0 = all)");
}

splitleak::ExperimentConfig Resolve(const Overrides& o) {
  using namespace splitleak;
  ExperimentConfig c = LoadExperimentConfig(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.out) c.out = std::filesystem::absolute(*o.out).string();
  if (o.mode) c.train.mode = *o.mode == "fsl" ? TrainingMode::kFsl : TrainingMode::kSl;
  if (o.dp_sigma) {
    if (!c.train.dp) c.train.dp = DpConfig{};
    c.train.dp->noise_multiplier = *o.dp_sigma;
  }
  if (o.labeldp_p) {
    if (*o.labeldp_p == 0.0)
      c.train.label_dp.reset();
    else
      c.train.label_dp = LabelDpConfig{*o.labeldp_p};
  }
  if (o.variant)
    c.attack.variant = *o.variant == "topk" ? AttackVariant::kTopK : AttackVariant::kExact;
  if (o.k) {
    c.attack.k = *o.k;
    c.baseline_k = *o.k;
  }
  if (o.max_samples) c.attack.max_samples = *o.max_samples;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitleak: feature and label reconstruction attacks on split learning"};
  app.require_subcommand(1);

  Overrides train_o, attack_o, baseline_o, run_o;
  auto* train = app.add_subcommand("train", "train a split model and write checkpoints");
  AddRunFlags(train, train_o);
  auto* attack = app.add_subcommand("attack", "attack test samples using saved checkpoints");
  AddRunFlags(attack, attack_o);
  auto* baseline = app.add_subcommand("baseline", "KNN baselines using saved checkpoints");
  AddRunFlags(baseline, baseline_o);
  auto* run = app.add_subcommand("run", "train, attack and baselines in one go");
  AddRunFlags(run, run_o);

  std::vector<std::string> inputs;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "merge result files into one table");
  report->add_option("inputs", inputs, "results.jsonl files or run directories")
      ->required();
  report->add_option("--out", report_out, "write merged results.jsonl and summary.tsv here");

  auto* selftest = app.add_subcommand("selftest", "run the built-in property checks");

  CLI11_PARSE(app, argc, argv);

  try {
    auto stage = [&](const Overrides& o, splitleak::Stage s) {
      splitleak::Experiment e(Resolve(o));
      std::cout << "config " << e.hash() << " scenario " << e.config().Scenario()
                << " -> " << e.config().OutDir().string() << '\n';
      e.Execute(s, std::cout);
      return 0;
    };
    if (*train) return stage(train_o, splitleak::Stage::kTrain);
    if (*attack) return stage(attack_o, splitleak::Stage::kAttack);
    if (*baseline) return stage(baseline_o, splitleak::Stage::kBaseline);
    if (*run) return stage(run_o, splitleak::Stage::kRun);
    if (*report) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      auto merged = splitleak::MergeRuns(paths);
      auto rows = splitleak::Summarize(merged);
      std::cout << splitleak::FormatSummary(rows);
      if (report_out) {
        std::filesystem::path dir(*report_out);
        std::filesystem::create_directories(dir);
        splitleak::WriteResults(dir / "results.jsonl", merged);
        splitleak::WriteSummary(dir, merged);
      }
      return 0;
    }
    if (*selftest) return splitleak::RunSelfTest(std::cout) ? 0 : 1;
  } catch (const splitleak::Error& e) {
    std::cerr << "splitleak: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "splitleak: unexpected error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
