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

// Built-in sanity suite run by `splitleak selftest`: finite-difference
// gradients, attack self-consistency, rank AUC against pair counting, DP
// mechanics and checkpoint round trips, all on synthetic data.

#ifndef SPLITLEAK_SELFTEST_H_
#define SPLITLEAK_SELFTEST_H_

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "splitleak/attack.h"
#include "splitleak/checkpoint.h"
#include "splitleak/data.h"
#include "splitleak/dp.h"
#include "splitleak/metrics.h"
#include "splitleak/nn.h"

namespace splitleak {

namespace selftest {

inline std::string FormatG(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Total loss of one sample through both halves.
inline double SampleLoss(const ServerModel& s, const ClientModel& c,
                         const Dataset& ds, std::size_t row) {
  CutActivation a = ForwardServer(s, ds.ServerView(row));
  Vector z = ForwardClientLogits(c, a.values,
                                 std::vector<ClientFeatures>{ds.ClientView(row)});
  // Unclamped logistic loss, whose derivative is exactly LogitGradient.
  double zz = z(0);
  return ds.Label(row) ? std::log1p(std::exp(-zz)) : std::log1p(std::exp(zz));
}

// Worst relative error between analytic and central-difference partials
// over a random subset of parameters of both parties.
inline double GradientCheck(int trials, std::uint64_t seed) {
  FeatureSchema schema = DefaultSyntheticSchema();
  Dataset ds = GenerateSynthetic(schema, 64, 0.5, seed);
  ArchitectureConfig arch;
  arch.embed_dim = 3;
  arch.cut_width = 4;
  arch.server_hidden = {5};
  arch.client_hidden = {6, 4};
  arch.embedding_init_stddev = 0.3;
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  double worst = 0.0;
  Rng pick(seed, 100);
  for (int t = 0; t < trials; ++t) {
    Rng init(seed + static_cast<std::uint64_t>(t), streams::kInit);
    ServerModel s = InitServerModel(schema, arch, FitScalers(ds, rows), init);
    ClientModel c = InitClientModel(schema, arch, init);
    std::size_t row = pick.Below(ds.size());
    CutActivation a = ForwardServer(s, ds.ServerView(row));
    BackwardResult b = BackwardClient(c, a, ds.ClientView(row), ds.Label(row));
    ServerGrads sg = BackwardServer(s, ds.ServerView(row), b.cut_gradient);
    auto check = [&](std::vector<std::span<double>> params,
                     std::vector<std::span<const double>> grads) {
      for (int probe = 0; probe < 6; ++probe) {
        std::size_t tensor = pick.Below(params.size());
        if (params[tensor].empty()) continue;
        std::size_t i = pick.Below(params[tensor].size());
        double& p = params[tensor][i];
        const double h = 1e-5, keep = p;
        p = keep + h;
        double up = SampleLoss(s, c, ds, row);
        p = keep - h;
        double down = SampleLoss(s, c, ds, row);
        p = keep;
        double mid = SampleLoss(s, c, ds, row);
        // A ReLU kink inside [keep - h, keep + h] makes the one-sided slopes
        // disagree; the loss is not differentiable there, so skip the probe.
        double right = (up - mid) / h, left = (mid - down) / h;
        if (std::abs(right - left) > 1e-6 + 1e-3 * (std::abs(right) + std::abs(left)))
          continue;
        double fd = (up - down) / (2 * h);
        double an = grads[tensor][i];
        double err = std::abs(an) < 1e-6 && std::abs(fd) < 1e-6
                         ? std::abs(an - fd) / 1e-2
                         : std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
        worst = std::max(worst, err);
      }
    };
    check(c.Parameters(), b.client_grads.Views());
    check(s.Parameters(), sg.Views());
  }
  return worst;
}

struct OracleResult {
  std::size_t samples = 0, ties = 0, exact = 0;
};

inline OracleResult AttackOracle(std::size_t n, std::uint64_t seed) {
  FeatureSchema schema = DefaultSyntheticSchema();
  Dataset ds = GenerateSynthetic(schema, n, 0.5, seed);
  ArchitectureConfig arch;
  arch.server_hidden = {16};
  arch.client_hidden = {16, 8};
  arch.cut_width = 8;
  arch.embed_dim = 4;
  arch.embedding_init_stddev = 0.5;
  std::vector<std::size_t> rows(ds.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Rng init(seed, streams::kInit);
  ServerModel s = InitServerModel(schema, arch, FitScalers(ds, rows), init);
  ClientModel c = InitClientModel(schema, arch, init);
  auto L = EnumerateConfigurations(schema);
  OracleResult r;
  for (std::size_t row : rows) {
    CutActivation a = ForwardServer(s, ds.ServerView(row));
    CutGradient g = BackwardClient(c, a, ds.ClientView(row), ds.Label(row)).cut_gradient;
    AttackOutcome o = ExactAttack(c, a, g, L);
    ++r.samples;
    if (o.runner_up_distance < 1e-9) {
      ++r.ties;
      continue;
    }
    if (o.predicted == TrueConfiguration(ds, row) && o.distance < 1e-9) ++r.exact;
  }
  return r;
}

inline double AucOracleWorst(int instances, std::uint64_t seed) {
  Rng rng(seed, 200);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    std::size_t n = 2 + rng.Below(60);
    std::vector<double> score(n);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] = static_cast<double>(rng.Below(8));  // many ties
      label[i] = rng.Bernoulli(0.4) ? 1 : 0;
    }
    label[0] = 0;
    label[1] = 1;
    double pairs = 0, wins = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (label[i] == 1 && label[j] == 0) {
          pairs += 1;
          wins += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
        }
    worst = std::max(worst, std::abs(Auc(score, label) - wins / pairs));
  }
  return worst;
}

}  // namespace selftest

// Prints one PASS/FAIL line per check; returns true when all pass.
inline bool RunSelfTest(std::ostream& out) {
  bool ok = true;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    ok = ok && pass;
  };
  auto guarded = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  };

  guarded("gradient-fd", [&] {
    double worst = selftest::GradientCheck(100, 7);
    report("gradient-fd", worst < 1e-4,
           "max relative error " + selftest::FormatG(worst));
  });
  guarded("attack-oracle", [&] {
    auto r = selftest::AttackOracle(500, 11);
    report("attack-oracle", r.exact + r.ties == r.samples,
           std::to_string(r.exact) + "/" + std::to_string(r.samples - r.ties) +
               " recovered, " + std::to_string(r.ties) + " ties excluded");
  });
  guarded("auc-oracle", [&] {
    double worst = selftest::AucOracleWorst(1000, 3);
    report("auc-oracle", worst < 1e-12, "max deviation " + selftest::FormatG(worst));
  });
  guarded("dp-clip", [&] {
    DpConfig cfg;
    cfg.clip_mode = ClipMode::kFixed;
    cfg.fixed_clip = 1.0;
    ClipState state(cfg);
    Rng rng(5, streams::kDpNoise);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      CutGradient g{Vector::NullaryExpr(8, [&] { return rng.Normal(0.0, 2.0); })};
      worst = std::max(worst, ClipAndNoise(g, state, 0.0, rng).values.norm());
    }
    report("dp-clip", worst <= 1.0 + 1e-12, "max post-clip norm " + selftest::FormatG(worst));
  });
  guarded("dp-noise", [&] {
    DpConfig cfg;
    cfg.clip_mode = ClipMode::kFixed;
    cfg.fixed_clip = 1.0;
    ClipState state(cfg);
    Rng rng(6, streams::kDpNoise);
    double ss = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      double v = ClipAndNoise(CutGradient{Vector::Zero(1)}, state, 0.01, rng).values(0);
      ss += v * v;
    }
    double sd = std::sqrt(ss / n);
    report("dp-noise", std::abs(sd - 0.01) <= 0.0005, "sample std " + std::to_string(sd));
  });
  guarded("label-flip", [&] {
    Rng rng(8, streams::kLabelFlip);
    int flips = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) flips += FlipLabel(0, 0.1, rng);
    double rate = static_cast<double>(flips) / n;
    report("label-flip", std::abs(rate - 0.1) <= 0.005, "flip rate " + std::to_string(rate));
  });
  guarded("checkpoint", [&] {
    FeatureSchema schema = DefaultSyntheticSchema();
    Dataset ds = GenerateSynthetic(schema, 32, 0.5, 2);
    std::vector<std::size_t> rows(ds.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    Rng init(2, streams::kInit);
    Checkpoint c;
    c.schema = schema;
    c.vocab = ds.vocab;
    c.server = InitServerModel(schema, ArchitectureConfig{}, FitScalers(ds, rows), init);
    c.client = InitClientModel(schema, ArchitectureConfig{}, init);
    std::string bytes = SerializeCheckpoint(c);
    report("checkpoint", SerializeCheckpoint(DeserializeCheckpoint(bytes)) == bytes,
           std::to_string(bytes.size()) + " bytes");
  });
  return ok;
}

}  // namespace splitleak

#endif  // SPLITLEAK_SELFTEST_H_
