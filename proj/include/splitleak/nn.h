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

// A two-party split model with hand-written backpropagation.
//
//   server:  [embeddings(server codes); standardized numerics] -> trunk -> a_c
//   client:  [a_c; embeddings(client codes)] -> head -> logit -> sigmoid
//
// Batched tensors hold one sample per column. Per-sample cut gradients are
// never averaged: column j of a cut-gradient matrix is dL_j/d(a_c)_j for the
// loss of sample j alone. Parameter gradients are averaged over the batch.

#ifndef SPLITLEAK_NN_H_
#define SPLITLEAK_NN_H_

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "splitleak/common.h"
#include "splitleak/data.h"

namespace splitleak {

enum class Activation { kIdentity, kRelu, kSigmoid };

inline constexpr double kProbabilityClamp = 1e-7;

inline double Sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// dL/dz = sigmoid(z) - y, evaluated without cancellation when the
// prediction saturates toward the label (for y = 1 it equals -sigmoid(-z)).
inline double LogitGradient(double z, int label) {
  return label ? -Sigmoid(-z) : Sigmoid(z);
}

// Binary cross-entropy on a probability clamped to [1e-7, 1 - 1e-7].
inline double BinaryCrossEntropy(double p, int label) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label ? -std::log(p) : -std::log1p(-p);
}

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

struct DenseStackGrads {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

class DenseStack {
 public:
  // activations[0] is the input, activations[i + 1] the output of layer i.
  struct Trace {
    std::vector<Matrix> activations;
  };

  DenseStack() = default;
  explicit DenseStack(std::vector<DenseLayer> layers)
      : layers_(std::move(layers)) {
    Validate();
  }

  // Glorot-uniform weights, zero biases. `widths` lists every layer's output
  // size; hidden layers use `hidden`, the last one `last`.
  static DenseStack Glorot(int input_dim, std::span<const int> widths,
                           Activation hidden, Activation last, Rng& rng) {
    std::vector<DenseLayer> layers;
    int in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      int out = widths[i];
      if (in < 1 || out < 1) throw ConfigError("layer widths must be >= 1");
      double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      DenseLayer layer;
      layer.weight.resize(out, in);
      for (Eigen::Index c = 0; c < in; ++c)
        for (Eigen::Index r = 0; r < out; ++r)
          layer.weight(r, c) = rng.Uniform(-limit, limit);
      layer.bias = Vector::Zero(out);
      layer.activation = i + 1 == widths.size() ? last : hidden;
      layers.push_back(std::move(layer));
      in = out;
    }
    return DenseStack(std::move(layers));
  }

  void Validate() const {
    if (layers_.empty()) throw DimensionError("dense stack has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.weight.rows())
        throw DimensionError("layer " + std::to_string(i) +
                             ": bias length != weight rows");
      if (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())
        throw DimensionError("layer " + std::to_string(i) +
                             " input width does not chain");
      if (!l.weight.allFinite() || !l.bias.allFinite())
        throw NumericError("layer " + std::to_string(i) +
                           " has non-finite parameters");
    }
  }

  Eigen::Index input_dim() const { return layers_.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers_.back().weight.rows(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  Matrix Forward(const Matrix& x, Trace* trace = nullptr) const {
    if (x.rows() != input_dim())
      throw DimensionError("dense stack expects input width " +
                           std::to_string(input_dim()) + ", got " +
                           std::to_string(x.rows()));
    if (trace) {
      trace->activations.clear();
      trace->activations.push_back(x);
    }
    Matrix h = x;
    for (const auto& l : layers_) {
      Matrix z = l.weight * h;
      z.colwise() += l.bias;
      Apply(l.activation, z);
      h = std::move(z);
      if (trace) trace->activations.push_back(h);
    }
    return h;
  }

  // Backpropagates per-sample `upstream` = dL_j/d(output_j). Parameter
  // gradients accumulate scale * sum_j into `grads` (skipped when null); the
  // returned matrix is the per-sample gradient with respect to the input.
  Matrix Backward(const Trace& trace, Matrix upstream, double scale,
                  DenseStackGrads* grads) const {
    if (grads && grads->weight.size() != layers_.size()) *grads = ZeroGrads();
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& l = layers_[i];
      const Matrix& out = trace.activations[i + 1];
      const Matrix& in = trace.activations[i];
      switch (l.activation) {
        case Activation::kIdentity:
          break;
        case Activation::kRelu:
          upstream = (out.array() > 0.0).select(upstream, 0.0);
          break;
        case Activation::kSigmoid:
          upstream.array() *= out.array() * (1.0 - out.array());
          break;
      }
      if (grads) {
        grads->weight[i].noalias() += scale * (upstream * in.transpose());
        grads->bias[i].noalias() += scale * upstream.rowwise().sum();
      }
      upstream = l.weight.transpose() * upstream;
    }
    return upstream;
  }

  DenseStackGrads ZeroGrads() const {
    DenseStackGrads g;
    for (const auto& l : layers_) {
      g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vector::Zero(l.bias.size()));
    }
    return g;
  }

  void AppendParameters(std::vector<std::span<double>>& out) {
    for (auto& l : layers_) {
      out.emplace_back(l.weight.data(), l.weight.size());
      out.emplace_back(l.bias.data(), l.bias.size());
    }
  }

 private:
  static void Apply(Activation a, Matrix& z) {
    switch (a) {
      case Activation::kIdentity:
        break;
      case Activation::kRelu:
        z = z.cwiseMax(0.0);
        break;
      case Activation::kSigmoid:
        z = z.unaryExpr([](double v) { return Sigmoid(v); });
        break;
    }
  }

  std::vector<DenseLayer> layers_;
};

inline void AppendGradients(const DenseStackGrads& g,
                            std::vector<std::span<const double>>& out) {
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.emplace_back(g.weight[i].data(), g.weight[i].size());
    out.emplace_back(g.bias[i].data(), g.bias[i].size());
  }
}

// One table per categorical feature, rows indexed by category code.
struct EmbeddingTable {
  std::vector<Matrix> tables;  // cardinality x dim
  int dim = 0;

  static EmbeddingTable Normal(std::span<const int> cardinalities, int dim,
                               double stddev, Rng& rng) {
    EmbeddingTable e;
    e.dim = dim;
    for (int card : cardinalities) {
      Matrix t(card, dim);
      for (Eigen::Index c = 0; c < dim; ++c)
        for (Eigen::Index r = 0; r < card; ++r) t(r, c) = rng.Normal(0.0, stddev);
      e.tables.push_back(std::move(t));
    }
    return e;
  }

  Eigen::Index width() const {
    return static_cast<Eigen::Index>(tables.size()) * dim;
  }

  void CheckCodes(std::span<const int> codes) const {
    if (codes.size() != tables.size())
      throw SchemaError("expected " + std::to_string(tables.size()) +
                        " categorical codes, got " +
                        std::to_string(codes.size()));
    for (std::size_t f = 0; f < codes.size(); ++f)
      if (codes[f] < 0 || codes[f] >= tables[f].rows())
        throw SchemaError("category index " + std::to_string(codes[f]) +
                          " outside cardinality " +
                          std::to_string(tables[f].rows()) +
                          " of embedded feature " + std::to_string(f));
  }

  // Writes the concatenated embeddings of `codes` into rows
  // [offset, offset + width()) of column `col`.
  void Gather(std::span<const int> codes, Matrix& dst, Eigen::Index offset,
              Eigen::Index col) const {
    for (std::size_t f = 0; f < tables.size(); ++f)
      dst.block(offset + static_cast<Eigen::Index>(f) * dim, col, dim, 1) =
          tables[f].row(codes[f]).transpose();
  }

  void ScatterAdd(std::span<const int> codes, const Matrix& src,
                  Eigen::Index offset, Eigen::Index col, double scale,
                  std::vector<Matrix>& grads) const {
    for (std::size_t f = 0; f < tables.size(); ++f)
      grads[f].row(codes[f]) +=
          scale *
          src.block(offset + static_cast<Eigen::Index>(f) * dim, col, dim, 1)
              .transpose();
  }

  std::vector<Matrix> ZeroGrads() const {
    std::vector<Matrix> g;
    for (const auto& t : tables) g.push_back(Matrix::Zero(t.rows(), t.cols()));
    return g;
  }

  void AppendParameters(std::vector<std::span<double>>& out) {
    for (auto& t : tables) out.emplace_back(t.data(), t.size());
  }
};

inline void AppendGradients(const std::vector<Matrix>& g,
                            std::vector<std::span<const double>>& out) {
  for (const auto& m : g) out.emplace_back(m.data(), m.size());
}

struct CutActivation {
  Vector values;
};

struct CutGradient {
  Vector values;
};

// Standardization for one numeric server feature; NaN imputes to the mean.
struct NumericScaler {
  double mean = 0.0;
  double stddev = 1.0;

  double Apply(double x) const {
    return std::isnan(x) ? 0.0 : (x - mean) / stddev;
  }
  friend bool operator==(const NumericScaler&, const NumericScaler&) = default;
};

// Mean/std per numeric server feature over `rows` (the train split).
inline std::vector<NumericScaler> FitScalers(const Dataset& ds,
                                             std::span<const std::size_t> rows) {
  std::vector<NumericScaler> out;
  for (std::size_t f : ds.schema.server_features()) {
    if (ds.schema[f].categorical()) continue;
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t r : rows) {
      double v = ds.rows[r].numbers[f];
      if (std::isnan(v)) continue;
      sum += v;
      ++n;
    }
    NumericScaler s;
    s.mean = n ? sum / static_cast<double>(n) : 0.0;
    for (std::size_t r : rows) {
      double v = ds.rows[r].numbers[f];
      if (!std::isnan(v)) sq += (v - s.mean) * (v - s.mean);
    }
    double var = n > 1 ? sq / static_cast<double>(n - 1) : 0.0;
    s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
    out.push_back(s);
  }
  return out;
}

struct ArchitectureConfig {
  int embed_dim = 16;
  int cut_width = 32;
  std::vector<int> server_hidden = {128};
  std::vector<int> client_hidden = {256, 128};
  double embedding_init_stddev = 0.01;
};

struct ServerGrads {
  std::vector<Matrix> embeddings;
  DenseStackGrads trunk;

  std::vector<std::span<const double>> Views() const {
    std::vector<std::span<const double>> out;
    AppendGradients(embeddings, out);
    AppendGradients(trunk, out);
    return out;
  }
};

struct ServerModel {
  EmbeddingTable embeddings;
  std::vector<NumericScaler> scalers;
  DenseStack trunk;

  int cut_width() const { return static_cast<int>(trunk.output_dim()); }

  Eigen::Index input_width() const {
    return embeddings.width() + static_cast<Eigen::Index>(scalers.size());
  }

  Matrix Inputs(std::span<const ServerFeatures> batch) const {
    Matrix x(input_width(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& s = batch[j];
      embeddings.CheckCodes(s.codes);
      if (s.numbers.size() != scalers.size())
        throw SchemaError("expected " + std::to_string(scalers.size()) +
                          " numeric server features, got " +
                          std::to_string(s.numbers.size()));
      auto col = static_cast<Eigen::Index>(j);
      embeddings.Gather(s.codes, x, 0, col);
      for (std::size_t k = 0; k < scalers.size(); ++k) {
        if (std::isinf(s.numbers[k]))
          throw SchemaError("numeric server feature is not finite");
        x(embeddings.width() + static_cast<Eigen::Index>(k), col) =
            scalers[k].Apply(s.numbers[k]);
      }
    }
    return x;
  }

  std::vector<std::span<double>> Parameters() {
    std::vector<std::span<double>> out;
    embeddings.AppendParameters(out);
    trunk.AppendParameters(out);
    return out;
  }

  ServerGrads ZeroGrads() const {
    return {embeddings.ZeroGrads(), trunk.ZeroGrads()};
  }
};

struct ClientGrads {
  std::vector<Matrix> embeddings;
  DenseStackGrads head;

  std::vector<std::span<const double>> Views() const {
    std::vector<std::span<const double>> out;
    AppendGradients(embeddings, out);
    AppendGradients(head, out);
    return out;
  }
};

// The head's last layer is a single identity unit producing the logit; the
// model's output probability is its sigmoid.
struct ClientModel {
  EmbeddingTable embeddings;
  DenseStack head;
  int cut_width = 0;

  Matrix Inputs(const Matrix& cut, std::span<const ClientFeatures> batch) const {
    if (cut.rows() != cut_width)
      throw DimensionError("cut activation width " +
                           std::to_string(cut.rows()) + " != " +
                           std::to_string(cut_width));
    if (cut.cols() != static_cast<Eigen::Index>(batch.size()))
      throw DimensionError("cut activations and client batch differ in size");
    Matrix x(cut_width + embeddings.width(), cut.cols());
    x.topRows(cut_width) = cut;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      embeddings.CheckCodes(batch[j].codes);
      embeddings.Gather(batch[j].codes, x, cut_width,
                        static_cast<Eigen::Index>(j));
    }
    return x;
  }

  std::vector<std::span<double>> Parameters() {
    std::vector<std::span<double>> out;
    embeddings.AppendParameters(out);
    head.AppendParameters(out);
    return out;
  }

  ClientGrads ZeroGrads() const {
    return {embeddings.ZeroGrads(), head.ZeroGrads()};
  }
};

inline ServerModel InitServerModel(const FeatureSchema& schema,
                                   const ArchitectureConfig& arch,
                                   std::vector<NumericScaler> scalers,
                                   Rng& rng) {
  std::vector<int> cards;
  std::size_t n_numeric = 0;
  for (std::size_t f : schema.server_features()) {
    if (schema[f].categorical())
      cards.push_back(schema[f].cardinality);
    else
      ++n_numeric;
  }
  if (scalers.size() != n_numeric)
    throw DimensionError("need one scaler per numeric server feature");
  if (cards.empty() && n_numeric == 0)
    throw SchemaError("schema has no server features");
  ServerModel m;
  m.embeddings =
      EmbeddingTable::Normal(cards, arch.embed_dim, arch.embedding_init_stddev, rng);
  m.scalers = std::move(scalers);
  std::vector<int> widths = arch.server_hidden;
  widths.push_back(arch.cut_width);
  m.trunk = DenseStack::Glorot(static_cast<int>(m.input_width()), widths,
                               Activation::kRelu, Activation::kIdentity, rng);
  return m;
}

inline ClientModel InitClientModel(const FeatureSchema& schema,
                                   const ArchitectureConfig& arch, Rng& rng) {
  std::vector<int> cards;
  for (std::size_t f : schema.client_features())
    cards.push_back(schema[f].cardinality);
  ClientModel m;
  m.cut_width = arch.cut_width;
  m.embeddings =
      EmbeddingTable::Normal(cards, arch.embed_dim, arch.embedding_init_stddev, rng);
  std::vector<int> widths = arch.client_hidden;
  widths.push_back(1);
  m.head = DenseStack::Glorot(static_cast<int>(arch.cut_width + m.embeddings.width()),
                              widths, Activation::kRelu, Activation::kIdentity,
                              rng);
  return m;
}

// ---------------------------------------------------------------- server pass

struct ServerTrace {
  std::vector<ServerFeatures> batch;
  DenseStack::Trace trunk;
};

inline Matrix ForwardServer(const ServerModel& model,
                            std::span<const ServerFeatures> batch,
                            ServerTrace* trace = nullptr) {
  Matrix x = model.Inputs(batch);
  if (trace) trace->batch.assign(batch.begin(), batch.end());
  return model.trunk.Forward(x, trace ? &trace->trunk : nullptr);
}

inline CutActivation ForwardServer(const ServerModel& model,
                                   const ServerFeatures& sample) {
  return {ForwardServer(model, std::span<const ServerFeatures>(&sample, 1)).col(0)};
}

// Continues the chain rule from per-sample cut gradients (d x B). Parameter
// gradients are scale * sum over samples; pass 1/B for a batch mean.
inline ServerGrads BackwardServer(const ServerModel& model,
                                  const ServerTrace& trace,
                                  const Matrix& cut_gradients, double scale) {
  if (cut_gradients.rows() != model.cut_width() ||
      cut_gradients.cols() != static_cast<Eigen::Index>(trace.batch.size()))
    throw DimensionError("cut gradient shape does not match the server batch");
  ServerGrads g = model.ZeroGrads();
  Matrix dx = model.trunk.Backward(trace.trunk, cut_gradients, scale, &g.trunk);
  for (std::size_t j = 0; j < trace.batch.size(); ++j)
    model.embeddings.ScatterAdd(trace.batch[j].codes, dx, 0,
                                static_cast<Eigen::Index>(j), scale,
                                g.embeddings);
  return g;
}

inline ServerGrads BackwardServer(const ServerModel& model,
                                  const ServerFeatures& sample,
                                  const CutGradient& cut_gradient) {
  if (cut_gradient.values.size() != model.cut_width())
    throw DimensionError("cut gradient length " +
                         std::to_string(cut_gradient.values.size()) +
                         " != cut width " + std::to_string(model.cut_width()));
  ServerTrace trace;
  ForwardServer(model, std::span<const ServerFeatures>(&sample, 1), &trace);
  return BackwardServer(model, trace, cut_gradient.values, 1.0);
}

// ---------------------------------------------------------------- client pass

struct ClientBatchResult {
  Vector probabilities;
  Vector losses;
  double mean_loss = 0.0;
  Matrix cut_gradients;  // d x B, per-sample
  ClientGrads grads;     // batch mean
};

inline Vector ForwardClientLogits(const ClientModel& model, const Matrix& cut,
                                  std::span<const ClientFeatures> batch,
                                  DenseStack::Trace* trace = nullptr) {
  return model.head.Forward(model.Inputs(cut, batch), trace).row(0).transpose();
}

struct ClientForwardResult {
  double probability = 0.5;
  double loss = 0.0;
};

inline ClientForwardResult ForwardClient(const ClientModel& model,
                                         const CutActivation& cut,
                                         const ClientFeatures& features,
                                         int label) {
  if (label != 0 && label != 1) throw SchemaError("label must be 0 or 1");
  Vector z = ForwardClientLogits(model, cut.values,
                                 std::span<const ClientFeatures>(&features, 1));
  double p = Sigmoid(z(0));
  return {p, BinaryCrossEntropy(p, label)};
}

// The loss gradient with respect to the logit is p - y (the gradient of the
// unclamped logistic loss, see LogitGradient); the clamp only guards the
// reported loss value.
inline ClientBatchResult BackwardClient(const ClientModel& model,
                                        const Matrix& cut,
                                        std::span<const ClientFeatures> batch,
                                        std::span<const int> labels) {
  if (labels.size() != batch.size())
    throw DimensionError("labels and client batch differ in size");
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw DimensionError("empty client batch");
  DenseStack::Trace trace;
  Matrix x = model.Inputs(cut, batch);
  Matrix logits = model.head.Forward(x, &trace);
  ClientBatchResult r;
  r.probabilities.resize(n);
  r.losses.resize(n);
  Matrix upstream(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    int y = labels[static_cast<std::size_t>(j)];
    if (y != 0 && y != 1) throw SchemaError("label must be 0 or 1");
    double p = Sigmoid(logits(0, j));
    r.probabilities(j) = p;
    r.losses(j) = BinaryCrossEntropy(p, y);
    upstream(0, j) = LogitGradient(logits(0, j), y);
  }
  r.mean_loss = r.losses.mean();
  const double scale = 1.0 / static_cast<double>(n);
  r.grads = model.ZeroGrads();
  Matrix dx =
      model.head.Backward(trace, std::move(upstream), scale, &r.grads.head);
  r.cut_gradients = dx.topRows(model.cut_width);
  for (Eigen::Index j = 0; j < n; ++j)
    model.embeddings.ScatterAdd(batch[static_cast<std::size_t>(j)].codes, dx,
                                model.cut_width, j, scale, r.grads.embeddings);
  return r;
}

struct BackwardResult {
  CutGradient cut_gradient;
  ClientGrads client_grads;
  double loss = 0.0;
  double probability = 0.5;
};

inline BackwardResult BackwardClient(const ClientModel& model,
                                     const CutActivation& cut,
                                     const ClientFeatures& features,
                                     int label) {
  auto r = BackwardClient(model, cut.values,
                          std::span<const ClientFeatures>(&features, 1),
                          std::span<const int>(&label, 1));
  return {{r.cut_gradients.col(0)}, std::move(r.grads), r.losses(0),
          r.probabilities(0)};
}

// ------------------------------------------------------------------ optimizer

struct AdagradState {
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> accumulators;  // sum of squared gradients
};

// accumulator += g^2; param -= lr * g / (sqrt(accumulator) + epsilon).
inline void AdagradStep(std::span<const std::span<double>> params,
                        std::span<const std::span<const double>> grads,
                        AdagradState& state) {
  if (params.size() != grads.size())
    throw DimensionError("adagrad: parameter and gradient lists differ");
  if (state.accumulators.empty()) {
    for (const auto& p : params) state.accumulators.emplace_back(p.size(), 0.0);
  }
  if (state.accumulators.size() != params.size())
    throw DimensionError("adagrad: state was built for other parameters");
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& acc = state.accumulators[t];
    if (p.size() != g.size() || acc.size() != p.size())
      throw DimensionError("adagrad: tensor " + std::to_string(t) +
                           " shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc[i] += g[i] * g[i];
      p[i] -= state.learning_rate * g[i] /
              (std::sqrt(acc[i]) + state.epsilon);
    }
  }
}

}  // namespace splitleak

#endif  // SPLITLEAK_NN_H_
