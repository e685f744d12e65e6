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

// Exhaustive gradient matching against the client model, and two KNN
// baselines that only use what the server holds anyway.
//
// For a fixed cut activation, every candidate (private features, label)
// yields dL/da_c = (p - y) * dz/da_c where z is the client logit, so the
// Jacobian row dz/da_c is computed once per feature combination and shared
// by both labels.

#ifndef SPLITLEAK_ATTACK_H_
#define SPLITLEAK_ATTACK_H_

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "splitleak/common.h"
#include "splitleak/data.h"
#include "splitleak/metrics.h"
#include "splitleak/nn.h"
#include "splitleak/protocol.h"

namespace splitleak {

struct CandidateConfiguration {
  std::vector<int> features;  // one code per schema.client_features()
  int label = 0;

  friend bool operator==(const CandidateConfiguration&,
                         const CandidateConfiguration&) = default;
};

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

inline std::size_t ConfigurationCount(std::span<const int> cardinalities) {
  std::size_t n = 2;
  for (int c : cardinalities) {
    if (c < 1) throw SchemaError("cardinality must be >= 1");
    if (n > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(c))
      return std::numeric_limits<std::size_t>::max();
    n *= static_cast<std::size_t>(c);
  }
  return n;
}

// All (features..., label) tuples in lexicographic order, label fastest.
inline std::vector<CandidateConfiguration> EnumerateConfigurations(
    std::span<const int> cardinalities,
    std::size_t cap = kDefaultEnumerationCap) {
  const std::size_t total = ConfigurationCount(cardinalities);
  if (total > cap)
    throw ConfigError("configuration space |L| = " +
                      (total == std::numeric_limits<std::size_t>::max()
                           ? std::string("overflow")
                           : std::to_string(total)) +
                      " exceeds the enumeration cap " + std::to_string(cap));
  std::vector<CandidateConfiguration> out;
  out.reserve(total);
  CandidateConfiguration cur;
  cur.features.assign(cardinalities.size(), 0);
  for (std::size_t i = 0; i < total; ++i) {
    out.push_back(cur);
    if (++cur.label < 2) continue;
    cur.label = 0;
    for (std::size_t f = cardinalities.size(); f-- > 0;) {
      if (++cur.features[f] < cardinalities[f]) break;
      cur.features[f] = 0;
    }
  }
  return out;
}

inline std::vector<int> PrivateCardinalities(const FeatureSchema& schema) {
  std::vector<int> cards;
  for (std::size_t f : schema.client_features())
    cards.push_back(schema[f].cardinality);
  return cards;
}

inline std::vector<CandidateConfiguration> EnumerateConfigurations(
    const FeatureSchema& schema, std::size_t cap = kDefaultEnumerationCap) {
  return EnumerateConfigurations(PrivateCardinalities(schema), cap);
}

inline CandidateConfiguration TrueConfiguration(const Dataset& ds,
                                                std::size_t row) {
  return {ds.ClientView(row).codes, ds.Label(row)};
}

struct AttackOutcome {
  std::size_t sample_id = 0;
  CandidateConfiguration predicted;
  std::size_t predicted_index = 0;
  double distance = 0.0;  // minimum over all candidates
  double runner_up_distance = std::numeric_limits<double>::infinity();
  std::optional<CandidateConfiguration> truth;  // evaluation only
  std::size_t candidates_evaluated = 0;
  std::chrono::nanoseconds elapsed{0};
};

// L2 distance from the observed gradient to every candidate's recomputed
// gradient, in the order of `candidates`.
inline std::vector<double> CandidateDistances(
    const ClientModel& client, const CutActivation& a_c,
    const CutGradient& observed,
    std::span<const CandidateConfiguration> candidates) {
  if (candidates.empty()) throw ConfigError("empty configuration list");
  if (a_c.values.size() != client.cut_width ||
      observed.values.size() != client.cut_width)
    throw DimensionError("activation/gradient length != client cut width");

  // Consecutive candidates that share features share one Jacobian column.
  std::vector<std::size_t> combo_of(candidates.size());
  std::vector<ClientFeatures> combos;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (combos.empty() || combos.back().codes != candidates[i].features)
      combos.push_back({candidates[i].features});
    combo_of[i] = combos.size() - 1;
  }

  const auto m = static_cast<Eigen::Index>(combos.size());
  Matrix cut = a_c.values.replicate(1, m);
  DenseStack::Trace trace;
  Matrix logits = client.head.Forward(client.Inputs(cut, combos), &trace);
  Matrix dx = client.head.Backward(trace, Matrix::Ones(1, m), 0.0, nullptr);

  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto c = static_cast<Eigen::Index>(combo_of[i]);
    int y = candidates[i].label;
    if (y != 0 && y != 1) throw SchemaError("candidate label must be 0 or 1");
    double scale = LogitGradient(logits(0, c), y);
    out[i] = (scale * dx.col(c).head(client.cut_width) - observed.values).norm();
  }
  return out;
}

// Argmin over the candidates; ties go to the lowest index.
inline AttackOutcome ExactAttack(const ClientModel& client,
                                 const CutActivation& a_c,
                                 const CutGradient& observed,
                                 std::span<const CandidateConfiguration> candidates) {
  auto t0 = std::chrono::steady_clock::now();
  auto dist = CandidateDistances(client, a_c, observed, candidates);
  AttackOutcome o;
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (dist[i] < dist[best]) best = i;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (i != best) o.runner_up_distance = std::min(o.runner_up_distance, dist[i]);
  o.predicted = candidates[best];
  o.predicted_index = best;
  o.distance = dist[best];
  o.candidates_evaluated = candidates.size();
  o.elapsed = std::chrono::steady_clock::now() - t0;
  return o;
}

namespace internal {

// Mode of `values` listed nearest-first; ties go to the value that shows up
// first, i.e. the nearest one.
inline int NearestMajority(std::span<const int> values) {
  std::vector<std::pair<int, int>> counts;  // value, count (first-seen order)
  for (int v : values) {
    auto it = std::find_if(counts.begin(), counts.end(),
                           [v](const auto& c) { return c.first == v; });
    if (it == counts.end())
      counts.emplace_back(v, 1);
    else
      ++it->second;
  }
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  return best->first;
}

// Per-feature and label vote over `configs`, which must be nearest-first.
inline CandidateConfiguration VoteConfigurations(
    std::span<const CandidateConfiguration> configs) {
  CandidateConfiguration out;
  const std::size_t n_features = configs.front().features.size();
  std::vector<int> column(configs.size());
  for (std::size_t f = 0; f < n_features; ++f) {
    for (std::size_t i = 0; i < configs.size(); ++i)
      column[i] = configs[i].features[f];
    out.features.push_back(NearestMajority(column));
  }
  for (std::size_t i = 0; i < configs.size(); ++i) column[i] = configs[i].label;
  out.label = NearestMajority(column);
  return out;
}

// Indices of the k smallest entries, ordered by (value, index).
inline std::vector<std::size_t> SmallestK(std::span<const double> values,
                                          std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  auto less = [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), less);
  idx.resize(k);
  return idx;
}

}  // namespace internal

// Majority vote per feature (and label) over the k nearest candidates.
inline AttackOutcome ExactAttackTopK(
    const ClientModel& client, const CutActivation& a_c,
    const CutGradient& observed,
    std::span<const CandidateConfiguration> candidates, std::size_t k) {
  if (k < 1 || k > candidates.size())
    throw ConfigError("top-k needs 1 <= k <= |L| (k = " + std::to_string(k) +
                      ", |L| = " + std::to_string(candidates.size()) + ")");
  auto t0 = std::chrono::steady_clock::now();
  auto dist = CandidateDistances(client, a_c, observed, candidates);
  auto nearest = internal::SmallestK(dist, std::max<std::size_t>(k, 2));
  std::vector<CandidateConfiguration> chosen;
  for (std::size_t i = 0; i < k; ++i) chosen.push_back(candidates[nearest[i]]);
  AttackOutcome o;
  o.predicted = internal::VoteConfigurations(chosen);
  o.predicted_index = nearest[0];
  o.distance = dist[nearest[0]];
  if (nearest.size() > 1) o.runner_up_distance = dist[nearest[1]];
  o.candidates_evaluated = candidates.size();
  o.elapsed = std::chrono::steady_clock::now() - t0;
  return o;
}

enum class AttackVariant { kExact, kTopK };

struct AttackSettings {
  AttackVariant variant = AttackVariant::kExact;
  std::size_t k = 1;
  unsigned threads = 0;  // 0: hardware concurrency
};

// Attacks every observation. Work is split into contiguous chunks, one per
// thread, and written into a pre-sized vector, so the result does not depend
// on the thread count.
inline std::vector<AttackOutcome> AttackObservations(
    const ClientModel& client, std::span<const Observation> observations,
    std::span<const CandidateConfiguration> candidates,
    const AttackSettings& settings) {
  std::vector<AttackOutcome> out(observations.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ob = observations[i];
      out[i] = settings.variant == AttackVariant::kExact
                   ? ExactAttack(client, ob.activation, ob.gradient, candidates)
                   : ExactAttackTopK(client, ob.activation, ob.gradient,
                                     candidates, settings.k);
      out[i].sample_id = ob.sample_id;
    }
  };
  unsigned threads = settings.threads ? settings.threads
                                      : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, std::max<std::size_t>(1, observations.size())));
  if (threads <= 1) {
    work(0, observations.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (observations.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t b = std::min(observations.size(), t * chunk);
    std::size_t e = std::min(observations.size(), b + chunk);
    pool.emplace_back(work, b, e);
  }
  for (auto& th : pool) th.join();
  return out;
}

// ------------------------------------------------------------------ baselines

// KNN over server features: Hamming distance on the categorical server
// codes plus Euclidean distance on train-standardized numerics.
class KnnFeatureBaseline {
 public:
  KnnFeatureBaseline(const Dataset& ds, std::span<const std::size_t> train_rows) {
    if (train_rows.empty()) throw ConfigError("KNN baseline needs train rows");
    scalers_ = FitScalers(ds, train_rows);
    for (std::size_t r : train_rows) {
      ServerFeatures s = ds.ServerView(r);
      codes_.insert(codes_.end(), s.codes.begin(), s.codes.end());
      for (std::size_t k = 0; k < s.numbers.size(); ++k)
        numbers_.push_back(scalers_[k].Apply(s.numbers[k]));
      configs_.push_back(TrueConfiguration(ds, r));
    }
    n_codes_ = ds.ServerView(train_rows[0]).codes.size();
    n_numbers_ = scalers_.size();
  }

  double Distance(std::size_t row, std::span<const int> codes,
                  std::span<const double> scaled) const {
    std::size_t hamming = 0;
    for (std::size_t c = 0; c < n_codes_; ++c)
      hamming += codes_[row * n_codes_ + c] != codes[c];
    double sq = 0.0;
    for (std::size_t k = 0; k < n_numbers_; ++k) {
      double d = numbers_[row * n_numbers_ + k] - scaled[k];
      sq += d * d;
    }
    return static_cast<double>(hamming) + std::sqrt(sq);
  }

  CandidateConfiguration Predict(const ServerFeatures& query, std::size_t k) const {
    if (query.codes.size() != n_codes_ || query.numbers.size() != n_numbers_)
      throw SchemaError("query does not match the baseline's server features");
    std::vector<double> scaled;
    for (std::size_t j = 0; j < n_numbers_; ++j)
      scaled.push_back(scalers_[j].Apply(query.numbers[j]));
    std::vector<double> dist(configs_.size());
    for (std::size_t r = 0; r < configs_.size(); ++r)
      dist[r] = Distance(r, query.codes, scaled);
    auto nearest = internal::SmallestK(dist, std::max<std::size_t>(1, k));
    std::vector<CandidateConfiguration> chosen;
    for (std::size_t i : nearest) chosen.push_back(configs_[i]);
    return internal::VoteConfigurations(chosen);
  }

 private:
  std::vector<NumericScaler> scalers_;
  std::vector<int> codes_;
  std::vector<double> numbers_;
  std::vector<CandidateConfiguration> configs_;
  std::size_t n_codes_ = 0;
  std::size_t n_numbers_ = 0;
};

// KNN over the server's own cut activations of the training rows.
class KnnActivationBaseline {
 public:
  KnnActivationBaseline(Matrix train_activations,
                        std::vector<CandidateConfiguration> configs)
      : activations_(std::move(train_activations)), configs_(std::move(configs)) {
    if (configs_.empty()) throw ConfigError("KNN baseline needs train rows");
    if (activations_.cols() != static_cast<Eigen::Index>(configs_.size()))
      throw DimensionError("one activation column per training row required");
  }

  static KnnActivationBaseline Build(const ServerModel& server, const Dataset& ds,
                                     std::span<const std::size_t> train_rows) {
    std::vector<ServerFeatures> s;
    std::vector<CandidateConfiguration> configs;
    for (std::size_t r : train_rows) {
      s.push_back(ds.ServerView(r));
      configs.push_back(TrueConfiguration(ds, r));
    }
    return KnnActivationBaseline(ForwardServer(server, s), std::move(configs));
  }

  CandidateConfiguration Predict(const CutActivation& query, std::size_t k) const {
    if (query.values.size() != activations_.rows())
      throw DimensionError("activation query has the wrong width");
    Eigen::RowVectorXd sq =
        (activations_.colwise() - query.values).colwise().squaredNorm();
    std::vector<double> dist(sq.data(), sq.data() + sq.size());
    auto nearest = internal::SmallestK(dist, std::max<std::size_t>(1, k));
    std::vector<CandidateConfiguration> chosen;
    for (std::size_t i : nearest) chosen.push_back(configs_[i]);
    return internal::VoteConfigurations(chosen);
  }

 private:
  Matrix activations_;
  std::vector<CandidateConfiguration> configs_;
};

// ----------------------------------------------------------------- evaluation

struct FeatureScore {
  std::string name;
  int cardinality = 0;
  F1Averaging averaging = F1Averaging::kMacro;
  double f1 = 0.0;
  double accuracy = 0.0;
};

struct AttackReport {
  std::vector<FeatureScore> features;  // schema.client_features() order
  FeatureScore label;
  std::size_t samples = 0;

  double MeanFeatureF1() const {
    double s = 0.0;
    for (const auto& f : features) s += f.f1;
    return features.empty() ? 0.0 : s / static_cast<double>(features.size());
  }

  const FeatureScore& Feature(std::string_view name) const {
    for (const auto& f : features)
      if (f.name == name) return f;
    if (label.name == name) return label;
    throw SchemaError("report has no feature '" + std::string(name) + "'");
  }
};

inline AttackReport EvaluatePredictions(
    std::span<const CandidateConfiguration> predicted,
    std::span<const CandidateConfiguration> truth, const FeatureSchema& schema) {
  if (predicted.empty()) throw NumericError("no outcomes to evaluate");
  if (predicted.size() != truth.size())
    throw DimensionError("predictions and truths differ in length");
  AttackReport rep;
  rep.samples = predicted.size();
  std::vector<int> p(predicted.size()), t(predicted.size());
  auto score = [&](const FeatureSpec& spec) {
    FeatureScore s;
    s.name = spec.name;
    s.cardinality = spec.cardinality;
    s.averaging = AveragingFor(spec.cardinality);
    s.f1 = F1(p, t, s.averaging);
    s.accuracy = Accuracy(p, t);
    return s;
  };
  const auto& client = schema.client_features();
  for (std::size_t f = 0; f < client.size(); ++f) {
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      p[i] = predicted[i].features.at(f);
      t[i] = truth[i].features.at(f);
    }
    rep.features.push_back(score(schema[client[f]]));
  }
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    p[i] = predicted[i].label;
    t[i] = truth[i].label;
  }
  rep.label = score(schema[schema.label_index()]);
  return rep;
}

inline AttackReport EvaluateAttack(std::span<const AttackOutcome> outcomes,
                                   const FeatureSchema& schema) {
  std::vector<CandidateConfiguration> p, t;
  for (const auto& o : outcomes) {
    if (!o.truth) throw ConfigError("outcome lacks ground truth");
    p.push_back(o.predicted);
    t.push_back(*o.truth);
  }
  return EvaluatePredictions(p, t, schema);
}

}  // namespace splitleak

#endif  // SPLITLEAK_ATTACK_H_
