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

// Split-learning training. The two parties only talk through
// ActivationMessage (server -> client) and GradientMessage (client ->
// server); ServerParty never receives client features or labels.

#ifndef SPLITLEAK_PROTOCOL_H_
#define SPLITLEAK_PROTOCOL_H_

#include <chrono>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "splitleak/common.h"
#include "splitleak/data.h"
#include "splitleak/dp.h"
#include "splitleak/metrics.h"
#include "splitleak/nn.h"

namespace splitleak {

enum class TrainingMode { kSl, kFsl };

struct TrainConfig {
  double learning_rate = 0.01;
  double adagrad_epsilon = 1e-8;
  ArchitectureConfig arch;
  int batch_size = 128;
  int epochs = 10;
  std::uint64_t seed = 42;
  std::optional<DpConfig> dp;
  std::optional<LabelDpConfig> label_dp;
  TrainingMode mode = TrainingMode::kSl;
  int fsl_samples_per_client = 16;
  bool keep_best_epoch = true;

  void Validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(adagrad_epsilon > 0.0))
      throw ConfigError("adagrad epsilon must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (fsl_samples_per_client < 1)
      throw ConfigError("fsl samples per client must be >= 1");
    if (arch.embed_dim < 1 || arch.cut_width < 1)
      throw ConfigError("embed_dim and cut_width must be >= 1");
    for (int w : arch.client_hidden)
      if (w < 1) throw ConfigError("client hidden widths must be >= 1");
    for (int w : arch.server_hidden)
      if (w < 1) throw ConfigError("server hidden widths must be >= 1");
    if (dp) dp->Validate();
    if (label_dp) label_dp->Validate();
  }
};

struct ActivationMessage {
  std::size_t sample_id = 0;
  CutActivation a_c;
};

struct GradientMessage {
  std::size_t sample_id = 0;
  CutGradient cut_gradient;
};

// A mini-batch as each party sees it; index j describes the same sample in
// every vector.
struct Batch {
  std::vector<std::size_t> sample_ids;
  std::vector<ServerFeatures> server;
  std::vector<ClientFeatures> client;
  std::vector<int> labels;  // as held by the client (possibly flipped)

  std::size_t size() const { return sample_ids.size(); }
};

inline Batch MakeBatch(const Dataset& ds, std::span<const std::size_t> ids,
                       std::span<const int> labels) {
  Batch b;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    b.sample_ids.push_back(ids[k]);
    b.server.push_back(ds.ServerView(ids[k]));
    b.client.push_back(ds.ClientView(ids[k]));
    b.labels.push_back(labels[k]);
  }
  return b;
}

class ServerParty {
 public:
  ServerParty(ServerModel model, double learning_rate, double epsilon)
      : model_(std::move(model)) {
    opt_.learning_rate = learning_rate;
    opt_.epsilon = epsilon;
  }

  std::vector<ActivationMessage> Forward(
      std::span<const std::size_t> sample_ids,
      std::span<const ServerFeatures> features) {
    Matrix a = ForwardServer(model_, features, &pending_);
    pending_ids_.assign(sample_ids.begin(), sample_ids.end());
    std::vector<ActivationMessage> out;
    for (std::size_t j = 0; j < sample_ids.size(); ++j)
      out.push_back({sample_ids[j], {a.col(static_cast<Eigen::Index>(j))}});
    return out;
  }

  // Completes backpropagation for the batch last sent by Forward and applies
  // one Adagrad step on the batch-mean gradient.
  ServerGrads Receive(std::span<const GradientMessage> messages) {
    if (messages.size() != pending_ids_.size())
      throw DimensionError("gradient messages do not match the pending batch");
    Matrix g(model_.cut_width(), static_cast<Eigen::Index>(messages.size()));
    for (std::size_t j = 0; j < messages.size(); ++j) {
      if (messages[j].sample_id != pending_ids_[j])
        throw DimensionError("gradient message out of order");
      if (messages[j].cut_gradient.values.size() != model_.cut_width())
        throw DimensionError("gradient message has wrong length");
      g.col(static_cast<Eigen::Index>(j)) = messages[j].cut_gradient.values;
    }
    ServerGrads grads = BackwardServer(
        model_, pending_, g, 1.0 / static_cast<double>(messages.size()));
    auto params = model_.Parameters();
    auto views = grads.Views();
    AdagradStep(params, views, opt_);
    return grads;
  }

  const ServerModel& model() const { return model_; }
  ServerModel& mutable_model() { return model_; }

 private:
  ServerModel model_;
  AdagradState opt_;
  ServerTrace pending_;
  std::vector<std::size_t> pending_ids_;
};

class ClientParty {
 public:
  ClientParty(ClientModel model, double learning_rate, double epsilon,
              std::optional<DpConfig> dp, std::uint64_t seed)
      : model_(std::move(model)), noise_rng_(seed, streams::kDpNoise) {
    opt_.learning_rate = learning_rate;
    opt_.epsilon = epsilon;
    if (dp) {
      dp_ = *dp;
      clip_ = ClipState(*dp);
    }
  }

  // Forward + backward on the received activations; DP-processes each
  // per-sample cut gradient, steps the client weights, and returns the
  // messages for the server.
  std::vector<GradientMessage> Step(
      std::span<const ActivationMessage> activations,
      std::span<const ClientFeatures> features, std::span<const int> labels,
      ClientBatchResult* result = nullptr) {
    if (activations.empty()) throw DimensionError("empty batch");
    Matrix cut(model_.cut_width, static_cast<Eigen::Index>(activations.size()));
    for (std::size_t j = 0; j < activations.size(); ++j)
      cut.col(static_cast<Eigen::Index>(j)) = activations[j].a_c.values;
    ClientBatchResult r = BackwardClient(model_, cut, features, labels);
    if (!std::isfinite(r.mean_loss))
      throw NumericError(
          "non-finite training loss; lower the learning rate or check inputs");
    std::vector<GradientMessage> out;
    for (std::size_t j = 0; j < activations.size(); ++j) {
      CutGradient g{r.cut_gradients.col(static_cast<Eigen::Index>(j))};
      if (dp_) g = ClipAndNoise(g, *clip_, dp_->noise_multiplier, noise_rng_);
      out.push_back({activations[j].sample_id, std::move(g)});
    }
    auto params = model_.Parameters();
    auto views = r.grads.Views();
    AdagradStep(params, views, opt_);
    if (result) *result = std::move(r);
    return out;
  }

  const ClientModel& model() const { return model_; }
  ClientModel& mutable_model() { return model_; }
  const std::optional<ClipState>& clip_state() const { return clip_; }

 private:
  ClientModel model_;
  AdagradState opt_;
  std::optional<DpConfig> dp_;
  std::optional<ClipState> clip_;
  Rng noise_rng_;
};

struct BatchOutcome {
  std::vector<ActivationMessage> activations;
  std::vector<GradientMessage> gradients;
  ClientBatchResult client;
  ServerGrads server;
};

// One protocol round: server forward to the cut, client forward/backward
// (and DP), server backward. Both parties step their optimizers.
inline BatchOutcome RunBatch(ServerParty& server, ClientParty& client,
                             const Batch& batch) {
  if (batch.size() == 0) throw DimensionError("empty batch");
  BatchOutcome out;
  out.activations = server.Forward(batch.sample_ids, batch.server);
  out.gradients =
      client.Step(out.activations, batch.client, batch.labels, &out.client);
  out.server = server.Receive(out.gradients);
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_auc = 0.0;  // NaN when the test split cannot score an AUC
  double wall_seconds = 0.0;
};

struct TrainingLog {
  TrainingMode mode = TrainingMode::kSl;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // -1: initial weights kept
  std::size_t steps = 0;
  std::size_t client_count = 0;  // FSL virtual clients
  std::size_t flipped_labels = 0;
  std::optional<DpConfig> dp;
  std::optional<LabelDpConfig> label_dp;
  int batch_size = 0;
};

struct TrainResult {
  ServerModel server;
  ClientModel client;
  TrainingLog log;
  std::optional<ClipState> clip;  // DP tracker at the retained epoch
};

// Scores `rows` with the current models (true labels, no DP).
inline std::vector<double> PredictProbabilities(
    const ServerModel& server, const ClientModel& client, const Dataset& ds,
    std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    std::size_t end = std::min(rows.size(), start + kChunk);
    std::vector<ServerFeatures> s;
    std::vector<ClientFeatures> c;
    for (std::size_t k = start; k < end; ++k) {
      s.push_back(ds.ServerView(rows[k]));
      c.push_back(ds.ClientView(rows[k]));
    }
    Matrix a = ForwardServer(server, s);
    Vector z = ForwardClientLogits(client, a, c);
    for (Eigen::Index j = 0; j < z.size(); ++j) out.push_back(Sigmoid(z(j)));
  }
  return out;
}

inline double EvaluateAuc(const ServerModel& server, const ClientModel& client,
                          const Dataset& ds, std::span<const std::size_t> rows) {
  auto scores = PredictProbabilities(server, client, ds, rows);
  std::vector<int> labels;
  for (std::size_t r : rows) labels.push_back(ds.Label(r));
  try {
    return Auc(scores, labels);
  } catch (const NumericError&) {
    return std::nan("");
  }
}

// Training labels as held by the client: randomized response is applied
// once per label, in ascending row order, when label DP is configured.
inline std::vector<int> ClientTrainingLabels(const Dataset& ds,
                                             std::span<const std::size_t> rows,
                                             const TrainConfig& config,
                                             std::size_t* flipped = nullptr) {
  std::vector<std::size_t> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> labels(ds.size(), 0);
  for (std::size_t r : rows) labels[r] = ds.Label(r);
  std::size_t n = 0;
  if (config.label_dp) {
    Rng rng(config.seed, streams::kLabelFlip);
    for (std::size_t r : sorted) {
      int y = FlipLabel(labels[r], config.label_dp->flip_probability, rng);
      n += y != labels[r];
      labels[r] = y;
    }
  }
  if (flipped) *flipped = n;
  return labels;
}

// Virtual FSL clients: the train rows are shuffled once (own stream) and cut
// into groups of `per_client`; each group is kept in ascending row order.
inline std::vector<std::vector<std::size_t>> PartitionClients(
    std::span<const std::size_t> train, int per_client, std::uint64_t seed) {
  std::vector<std::size_t> perm(train.begin(), train.end());
  std::sort(perm.begin(), perm.end());
  Rng rng(seed, streams::kFslPartition);
  Shuffle(std::span<std::size_t>(perm), rng);
  std::vector<std::vector<std::size_t>> clients;
  for (std::size_t start = 0; start < perm.size();
       start += static_cast<std::size_t>(per_client)) {
    std::size_t end =
        std::min(perm.size(), start + static_cast<std::size_t>(per_client));
    std::vector<std::size_t> c(perm.begin() + static_cast<std::ptrdiff_t>(start),
                               perm.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(c.begin(), c.end());
    clients.push_back(std::move(c));
  }
  return clients;
}

// Mini-batch schedule for one epoch. SL: the sorted train rows are shuffled
// and cut into batch_size chunks. FSL: the client visiting order is shuffled,
// then each client's rows are shuffled and form one batch. Both draw from
// the same batch-order stream, so one FSL client replays SL with
// batch_size == per_client.
inline std::vector<std::vector<std::size_t>> EpochSchedule(
    std::span<const std::size_t> train,
    std::vector<std::vector<std::size_t>>* clients, const TrainConfig& config,
    Rng& order_rng) {
  std::vector<std::vector<std::size_t>> batches;
  if (config.mode == TrainingMode::kSl) {
    std::vector<std::size_t> perm(train.begin(), train.end());
    std::sort(perm.begin(), perm.end());
    Shuffle(std::span<std::size_t>(perm), order_rng);
    for (std::size_t start = 0; start < perm.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t end = std::min(
          perm.size(), start + static_cast<std::size_t>(config.batch_size));
      batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                           perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
  }
  std::vector<std::size_t> visit(clients->size());
  std::iota(visit.begin(), visit.end(), 0);
  Shuffle(std::span<std::size_t>(visit), order_rng);
  for (std::size_t c : visit) {
    std::vector<std::size_t> rows = (*clients)[c];
    Shuffle(std::span<std::size_t>(rows), order_rng);
    batches.push_back(std::move(rows));
  }
  return batches;
}

inline TrainResult Train(const Dataset& ds, const SplitIndices& split,
                         const TrainConfig& config) {
  config.Validate();
  if (ds.schema.server_features().empty())
    throw SchemaError("split training needs at least one server feature");
  if (ds.schema.client_features().empty())
    throw SchemaError("split training needs at least one client feature");
  if (split.train.empty()) throw ConfigError("empty training split");

  Rng init(config.seed, streams::kInit);
  ServerModel server_model =
      InitServerModel(ds.schema, config.arch, FitScalers(ds, split.train), init);
  ClientModel client_model = InitClientModel(ds.schema, config.arch, init);
  ServerParty server(std::move(server_model), config.learning_rate,
                     config.adagrad_epsilon);
  ClientParty client(std::move(client_model), config.learning_rate,
                     config.adagrad_epsilon, config.dp, config.seed);

  TrainResult result;
  result.log.mode = config.mode;
  result.log.seed = config.seed;
  result.log.dp = config.dp;
  result.log.label_dp = config.label_dp;
  result.log.batch_size = config.mode == TrainingMode::kSl
                              ? config.batch_size
                              : config.fsl_samples_per_client;
  std::vector<int> labels =
      ClientTrainingLabels(ds, split.train, config, &result.log.flipped_labels);

  std::vector<std::vector<std::size_t>> clients;
  if (config.mode == TrainingMode::kFsl) {
    clients = PartitionClients(split.train, config.fsl_samples_per_client,
                               config.seed);
    result.log.client_count = clients.size();
  }

  result.server = server.model();
  result.client = client.model();
  result.clip = client.clip_state();
  double best_auc = -1.0;
  Rng order_rng(config.seed, streams::kBatchOrder);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto schedule = EpochSchedule(split.train, &clients, config, order_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& rows : schedule) {
      std::vector<int> y;
      for (std::size_t r : rows) y.push_back(labels[r]);
      Batch batch = MakeBatch(ds, rows, y);
      BatchOutcome o = RunBatch(server, client, batch);
      loss_sum += o.client.losses.sum();
      seen += rows.size();
      ++result.log.steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.test_auc = split.test.empty()
                       ? std::nan("")
                       : EvaluateAuc(server.model(), client.model(), ds,
                                     split.test);
    rec.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    result.log.epochs.push_back(rec);
    bool better = !config.keep_best_epoch || std::isnan(rec.test_auc) ||
                  rec.test_auc > best_auc;
    if (better) {
      if (!std::isnan(rec.test_auc)) best_auc = rec.test_auc;
      result.server = server.model();
      result.client = client.model();
      result.clip = client.clip_state();
      result.log.best_epoch = epoch;
    }
  }
  return result;
}

// --------------------------------------------------- attack-time observation

// What the honest-but-curious server records for one sample: its own cut
// activation and the gradient the client sent back.
struct Observation {
  std::size_t sample_id = 0;
  CutActivation activation;
  CutGradient gradient;
};

// One forward/backward exchange per row without any optimizer step. Under
// label DP the client computes the gradient on its randomized label; under
// DP the gradient is clipped and noised with a copy of `clip` (the tracker
// state the client had after training).
inline std::vector<Observation> ObserveGradients(
    const ServerModel& server, const ClientModel& client, const Dataset& ds,
    std::span<const std::size_t> rows, const TrainConfig& config,
    const std::optional<ClipState>& clip) {
  Rng noise(config.seed, streams::kProbeNoise);
  Rng flip(config.seed, streams::kProbeLabelFlip);
  std::optional<ClipState> state = clip;
  if (config.dp && !state) state = ClipState(*config.dp);
  std::vector<Observation> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    Observation o;
    o.sample_id = r;
    o.activation = ForwardServer(server, ds.ServerView(r));
    int y = ds.Label(r);
    if (config.label_dp) y = FlipLabel(y, config.label_dp->flip_probability, flip);
    BackwardResult b = BackwardClient(client, o.activation, ds.ClientView(r), y);
    o.gradient = b.cut_gradient;
    if (config.dp)
      o.gradient = ClipAndNoise(o.gradient, *state, config.dp->noise_multiplier,
                                noise);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace splitleak

#endif  // SPLITLEAK_PROTOCOL_H_
