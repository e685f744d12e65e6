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

// Binary snapshot of a trained split model.
//
// Layout (all integers little-endian, doubles as IEEE-754 bit patterns):
//   "SPLKCKPT"  u32 version  u64 payload_bytes  payload  u64 fnv1a(payload)
// The payload holds the schema text, vocabulary, training provenance, both
// parties' parameters and the DP clip tracker, each matrix as
// u64 rows, u64 cols, rows*cols doubles in column-major order.

#ifndef SPLITLEAK_CHECKPOINT_H_
#define SPLITLEAK_CHECKPOINT_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "splitleak/data.h"
#include "splitleak/dp.h"
#include "splitleak/nn.h"
#include "splitleak/protocol.h"

namespace splitleak {

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'L', 'K',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FeatureSchema schema;
  Vocabulary vocab;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  TrainingMode mode = TrainingMode::kSl;
  int best_epoch = -1;
  std::optional<LabelDpConfig> label_dp;
  ServerModel server;
  ClientModel client;
  std::optional<ClipState> clip;
};

namespace internal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void Pod(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void U64(std::uint64_t v) { Pod(v); }
  void F64(double v) { Pod(v); }
  void Str(const std::string& s) {
    U64(s.size());
    buf_ += s;
  }
  void Mat(const Matrix& m) {
    U64(static_cast<std::uint64_t>(m.rows()));
    U64(static_cast<std::uint64_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()),
                static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
  T Pod() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint64_t U64() { return Pod<std::uint64_t>(); }
  double F64() { return Pod<double>(); }
  std::size_t Count(std::size_t limit = 1u << 30) {
    std::uint64_t n = U64();
    if (n > limit) throw ParseError("checkpoint: implausible count");
    return static_cast<std::size_t>(n);
  }
  std::string Str() {
    std::size_t n = Count();
    Need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Matrix Mat() {
    std::size_t r = Count(), c = Count();
    if (c != 0 && r > (std::size_t{1} << 30) / c)
      throw ParseError("checkpoint: matrix too large");
    Need(r * c * sizeof(double));
    Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    std::memcpy(m.data(), data_.data() + pos_, r * c * sizeof(double));
    pos_ += r * c * sizeof(double);
    return m;
  }
  Vector Vec() {
    Matrix m = Mat();
    if (m.cols() != 1) throw ParseError("checkpoint: expected a column vector");
    return m.col(0);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void Need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError("checkpoint: truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline void WriteStack(ByteWriter& w, const DenseStack& s) {
  w.U64(s.layers().size());
  for (const auto& l : s.layers()) {
    w.Pod(static_cast<std::uint8_t>(l.activation));
    w.Mat(l.weight);
    w.Mat(l.bias);
  }
}

inline DenseStack ReadStack(ByteReader& r) {
  std::vector<DenseLayer> layers(r.Count(1024));
  for (auto& l : layers) {
    auto a = r.Pod<std::uint8_t>();
    if (a > static_cast<std::uint8_t>(Activation::kSigmoid))
      throw ParseError("checkpoint: unknown activation code");
    l.activation = static_cast<Activation>(a);
    l.weight = r.Mat();
    l.bias = r.Vec();
  }
  return DenseStack(std::move(layers));
}

inline void WriteEmbeddings(ByteWriter& w, const EmbeddingTable& e) {
  w.Pod(static_cast<std::int32_t>(e.dim));
  w.U64(e.tables.size());
  for (const auto& t : e.tables) w.Mat(t);
}

inline EmbeddingTable ReadEmbeddings(ByteReader& r) {
  EmbeddingTable e;
  e.dim = r.Pod<std::int32_t>();
  e.tables.resize(r.Count(1 << 20));
  for (auto& t : e.tables) {
    t = r.Mat();
    if (t.cols() != e.dim) throw ParseError("checkpoint: embedding width");
  }
  return e;
}

}  // namespace internal

inline std::string SerializeCheckpoint(const Checkpoint& c) {
  internal::ByteWriter w;
  w.Str(c.schema.ToText());
  w.U64(c.schema.size());
  for (std::size_t f = 0; f < c.schema.size(); ++f) {
    const auto& toks = c.schema[f].categorical() ? c.vocab.tokens(f)
                                                 : std::vector<std::string>{};
    w.U64(toks.size());
    for (const auto& t : toks) w.Str(t);
  }
  w.U64(c.seed);
  w.U64(c.config_hash);
  w.Pod(static_cast<std::uint8_t>(c.mode));
  w.Pod(static_cast<std::int32_t>(c.best_epoch));
  w.Pod(static_cast<std::uint8_t>(c.label_dp.has_value()));
  if (c.label_dp) w.F64(c.label_dp->flip_probability);

  internal::WriteEmbeddings(w, c.server.embeddings);
  w.U64(c.server.scalers.size());
  for (const auto& s : c.server.scalers) {
    w.F64(s.mean);
    w.F64(s.stddev);
  }
  internal::WriteStack(w, c.server.trunk);
  internal::WriteEmbeddings(w, c.client.embeddings);
  internal::WriteStack(w, c.client.head);
  w.Pod(static_cast<std::int32_t>(c.client.cut_width));

  w.Pod(static_cast<std::uint8_t>(c.clip.has_value()));
  if (c.clip) {
    const DpConfig& d = c.clip->config();
    w.F64(d.noise_multiplier);
    w.Pod(static_cast<std::uint8_t>(d.clip_mode));
    w.F64(d.fixed_clip);
    w.F64(d.clip_fraction);
    w.F64(d.delta);
    w.U64(d.warmup);
    w.F64(d.median_step);
    w.U64(c.clip->warmup_buffer().size());
    for (double v : c.clip->warmup_buffer()) w.F64(v);
    w.F64(c.clip->median_estimate());
    w.U64(c.clip->observed());
  }

  const std::string& payload = w.bytes();
  internal::ByteWriter out;
  std::string head(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::string file = head;
  out.Pod(kCheckpointVersion);
  out.U64(payload.size());
  file += out.bytes();
  file += payload;
  internal::ByteWriter tail;
  tail.U64(Fnv1a(payload));
  file += tail.bytes();
  return file;
}

inline Checkpoint DeserializeCheckpoint(std::string_view file) {
  constexpr std::size_t kHead = sizeof(kCheckpointMagic) + 4 + 8;
  if (file.size() < kHead + 8 ||
      file.substr(0, sizeof(kCheckpointMagic)) !=
          std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw ParseError("not a splitleak checkpoint");
  internal::ByteReader head(file.substr(sizeof(kCheckpointMagic), 12));
  auto version = head.Pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " +
                     std::to_string(version));
  std::uint64_t n = head.U64();
  if (n != file.size() - kHead - 8)
    throw ParseError("checkpoint: payload length mismatch");
  std::string_view payload = file.substr(kHead, n);
  internal::ByteReader tail(file.substr(kHead + n));
  if (tail.U64() != Fnv1a(payload))
    throw ParseError("checkpoint: checksum mismatch");

  internal::ByteReader r(payload);
  Checkpoint c;
  c.schema = FeatureSchema::Parse(r.Str());
  if (r.Count() != c.schema.size())
    throw ParseError("checkpoint: vocabulary does not match schema");
  std::vector<std::vector<std::string>> tokens(c.schema.size());
  for (auto& t : tokens) {
    t.resize(r.Count(1 << 24));
    for (auto& s : t) s = r.Str();
  }
  c.vocab = Vocabulary(std::move(tokens));
  c.seed = r.U64();
  c.config_hash = r.U64();
  auto mode = r.Pod<std::uint8_t>();
  if (mode > 1) throw ParseError("checkpoint: unknown training mode");
  c.mode = static_cast<TrainingMode>(mode);
  c.best_epoch = r.Pod<std::int32_t>();
  if (r.Pod<std::uint8_t>()) c.label_dp = LabelDpConfig{r.F64()};

  c.server.embeddings = internal::ReadEmbeddings(r);
  c.server.scalers.resize(r.Count(1 << 20));
  for (auto& s : c.server.scalers) {
    s.mean = r.F64();
    s.stddev = r.F64();
  }
  c.server.trunk = internal::ReadStack(r);
  c.client.embeddings = internal::ReadEmbeddings(r);
  c.client.head = internal::ReadStack(r);
  c.client.cut_width = r.Pod<std::int32_t>();
  if (c.server.trunk.input_dim() != c.server.input_width() ||
      c.client.cut_width != c.server.cut_width() ||
      c.client.head.input_dim() != c.client.cut_width + c.client.embeddings.width())
    throw ParseError("checkpoint: server and client shapes do not chain");

  if (r.Pod<std::uint8_t>()) {
    DpConfig d;
    d.noise_multiplier = r.F64();
    auto mode_code = r.Pod<std::uint8_t>();
    if (mode_code > 1) throw ParseError("checkpoint: unknown clip mode");
    d.clip_mode = static_cast<ClipMode>(mode_code);
    d.fixed_clip = r.F64();
    d.clip_fraction = r.F64();
    d.delta = r.F64();
    d.warmup = r.Count();
    d.median_step = r.F64();
    std::vector<double> buf(r.Count());
    for (double& v : buf) v = r.F64();
    double median = r.F64();
    std::size_t observed = r.Count(std::size_t{1} << 62);
    c.clip = ClipState::Restore(d, std::move(buf), median, observed);
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return c;
}

inline void SaveCheckpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  std::string bytes = SerializeCheckpoint(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint LoadCheckpoint(const std::string& path) {
  return DeserializeCheckpoint(internal::ReadFile(path));
}

}  // namespace splitleak

#endif  // SPLITLEAK_CHECKPOINT_H_
