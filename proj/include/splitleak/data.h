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

// Tabular data: feature schemas, CSV ingestion with categorical vocabularies,
// numeric binning, train/test splitting and synthetic generation.
//
// Schema file grammar (one feature per line, '#' starts a comment, blank
// lines ignored):
//
//   name,kind,cardinality_or_dash,side,is_label
//
//   kind     := categorical | numeric
//   card.    := positive integer for categorical, '-' for numeric
//   side     := server | client
//   is_label := 0 | 1 | true | false
//
// Exactly one feature is the label; it must be categorical with cardinality
// 2 and live on the client. Every other client feature must be categorical.

#ifndef SPLITLEAK_DATA_H_
#define SPLITLEAK_DATA_H_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "splitleak/common.h"

namespace splitleak {

enum class FeatureKind { kCategorical, kNumeric };
enum class Side { kServer, kClient };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kCategorical;
  int cardinality = 0;  // 0 for numeric features
  Side side = Side::kServer;
  bool is_label = false;

  bool categorical() const { return kind == FeatureKind::kCategorical; }
  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

namespace internal {

inline std::string Trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> SplitPlain(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    out.push_back(Trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// RFC 4180 field splitting for a single physical line: double-quoted fields
// may contain commas and "" escapes. Returns nullopt on an unterminated quote.
inline std::optional<std::vector<std::string>> SplitCsvLine(
    std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : Trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  if (!line.empty() && line.back() == '\r') cur.pop_back();
  fields.push_back(was_quoted ? cur : Trim(cur));
  return fields;
}

inline std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::optional<double> ParseDouble(std::string_view s) {
  std::string tmp(s);
  if (tmp.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

}  // namespace internal

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features)
      : features_(std::move(features)) {
    Validate();
  }

  static FeatureSchema Parse(std::string_view text) {
    std::vector<FeatureSpec> specs;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      if (internal::Trim(line).empty()) continue;
      auto f = internal::SplitPlain(line, ',');
      auto fail = [&](const std::string& why) {
        return ParseError("schema line " + std::to_string(line_no) + ": " +
                          why);
      };
      if (f.size() != 5) throw fail("expected 5 comma-separated fields");
      FeatureSpec spec;
      spec.name = f[0];
      if (spec.name.empty()) throw fail("empty feature name");
      if (f[1] == "categorical") {
        spec.kind = FeatureKind::kCategorical;
        auto card = internal::ParseDouble(f[2]);
        if (!card || *card < 1 || *card != std::floor(*card))
          throw fail("categorical cardinality must be a positive integer");
        spec.cardinality = static_cast<int>(*card);
      } else if (f[1] == "numeric") {
        spec.kind = FeatureKind::kNumeric;
        if (f[2] != "-") throw fail("numeric feature takes '-' cardinality");
      } else {
        throw fail("unknown kind '" + f[1] + "'");
      }
      if (f[3] == "server") {
        spec.side = Side::kServer;
      } else if (f[3] == "client") {
        spec.side = Side::kClient;
      } else {
        throw fail("unknown side '" + f[3] + "'");
      }
      if (f[4] == "1" || f[4] == "true") {
        spec.is_label = true;
      } else if (f[4] == "0" || f[4] == "false") {
        spec.is_label = false;
      } else {
        throw fail("is_label must be 0/1/true/false");
      }
      specs.push_back(std::move(spec));
    }
    return FeatureSchema(std::move(specs));
  }

  static FeatureSchema Load(const std::string& path) {
    return Parse(internal::ReadFile(path));
  }

  std::string ToText() const {
    std::string out;
    for (const auto& f : features_) {
      out += f.name + ',' + (f.categorical() ? "categorical" : "numeric") +
             ',' + (f.categorical() ? std::to_string(f.cardinality) : "-") +
             ',' + (f.side == Side::kServer ? "server" : "client") + ',' +
             (f.is_label ? "1" : "0") + '\n';
    }
    return out;
  }

  std::uint64_t Hash() const { return Fnv1a(ToText()); }

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }

  std::size_t label_index() const { return label_; }
  // Schema positions of server features, in schema order.
  const std::vector<std::size_t>& server_features() const { return server_; }
  // Schema positions of private (non-label) client features.
  const std::vector<std::size_t>& client_features() const { return client_; }

  std::size_t IndexOf(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (features_[i].name == name) return i;
    throw SchemaError("no feature named '" + std::string(name) + "'");
  }

  // Returns a copy with one feature replaced; revalidates.
  FeatureSchema With(std::size_t index, FeatureSpec spec) const {
    auto copy = features_;
    copy.at(index) = std::move(spec);
    return FeatureSchema(std::move(copy));
  }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.features_ == b.features_;
  }

 private:
  void Validate() {
    server_.clear();
    client_.clear();
    std::size_t labels = 0;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      const auto& f = features_[i];
      for (std::size_t j = 0; j < i; ++j)
        if (features_[j].name == f.name)
          throw SchemaError("duplicate feature '" + f.name + "'");
      if (f.categorical() && f.cardinality < 1)
        throw SchemaError("feature '" + f.name + "' needs cardinality >= 1");
      if (f.is_label) {
        ++labels;
        label_ = i;
        if (!f.categorical() || f.cardinality != 2)
          throw SchemaError("label '" + f.name +
                            "' must be categorical with cardinality 2");
        if (f.side != Side::kClient)
          throw SchemaError("label '" + f.name + "' must be client-side");
        continue;
      }
      if (f.side == Side::kServer) {
        server_.push_back(i);
      } else {
        if (!f.categorical())
          throw SchemaError("client feature '" + f.name +
                            "' must be categorical (bin it first)");
        client_.push_back(i);
      }
    }
    if (labels != 1)
      throw SchemaError("schema needs exactly one label, found " +
                        std::to_string(labels));
  }

  std::vector<FeatureSpec> features_;
  std::size_t label_ = 0;
  std::vector<std::size_t> server_;
  std::vector<std::size_t> client_;
};

// One encoded row. `codes` and `numbers` are indexed by schema position;
// numeric slots of `codes` hold -1 and categorical slots of `numbers` hold 0.
// Missing numerics are NaN until imputed by the consumer.
struct Sample {
  std::vector<int> codes;
  std::vector<double> numbers;
  int label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// What the server holds for one sample: its own features only.
struct ServerFeatures {
  std::vector<int> codes;        // one per categorical server feature
  std::vector<double> numbers;   // one per numeric server feature
};

// What the client holds besides the label.
struct ClientFeatures {
  std::vector<int> codes;  // one per schema.client_features()
};

// Token dictionary per categorical feature; index -> string.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::vector<std::string>> tokens)
      : tokens_(std::move(tokens)) {}

  const std::vector<std::string>& tokens(std::size_t feature) const {
    return tokens_.at(feature);
  }
  std::vector<std::vector<std::string>>& mutable_tokens() { return tokens_; }

  std::optional<int> Encode(std::size_t feature, std::string_view tok) const {
    const auto& t = tokens_.at(feature);
    auto it = std::lower_bound(t.begin(), t.end(), tok);
    if (it == t.end() || *it != tok) return std::nullopt;
    return static_cast<int>(it - t.begin());
  }

  // Reserved-unknown indices decode to "<unk>".
  std::string Decode(std::size_t feature, int code) const {
    const auto& t = tokens_.at(feature);
    if (code >= 0 && static_cast<std::size_t>(code) < t.size()) return t[code];
    return "<unk>";
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  // Sorted per feature; empty for numeric features.
  std::vector<std::vector<std::string>> tokens_;
};

enum class VocabPolicy {
  kError,           // unseen token is a schema violation
  kReserveUnknown,  // unseen token maps to index cardinality - 1
};

struct Dataset {
  FeatureSchema schema;
  Vocabulary vocab;
  std::vector<Sample> rows;

  std::size_t size() const { return rows.size(); }

  ServerFeatures ServerView(std::size_t row) const {
    ServerFeatures out;
    const auto& s = rows.at(row);
    for (std::size_t f : schema.server_features()) {
      if (schema[f].categorical())
        out.codes.push_back(s.codes[f]);
      else
        out.numbers.push_back(s.numbers[f]);
    }
    return out;
  }

  ClientFeatures ClientView(std::size_t row) const {
    ClientFeatures out;
    const auto& s = rows.at(row);
    for (std::size_t f : schema.client_features())
      out.codes.push_back(s.codes[f]);
    return out;
  }

  int Label(std::size_t row) const { return rows.at(row).label; }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

namespace internal {

inline void CheckRow(const FeatureSchema& schema, const Sample& s,
                     std::size_t row) {
  if (s.codes.size() != schema.size() || s.numbers.size() != schema.size())
    throw SchemaError("row " + std::to_string(row) + " width " +
                      std::to_string(s.codes.size()) + " != schema width " +
                      std::to_string(schema.size()));
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!schema[f].categorical()) continue;
    if (s.codes[f] < 0 || s.codes[f] >= schema[f].cardinality)
      throw SchemaError("row " + std::to_string(row) + " feature '" +
                        schema[f].name + "' index " +
                        std::to_string(s.codes[f]) + " outside cardinality " +
                        std::to_string(schema[f].cardinality));
  }
}

}  // namespace internal

// Parses CSV text with a header row. Without `fixed_vocab` the vocabulary is
// built from the text (sorted distinct tokens); with it, tokens are encoded
// against the given vocabulary according to `policy`.
inline Dataset ParseCsv(std::string_view text, const FeatureSchema& schema,
                        VocabPolicy policy = VocabPolicy::kError,
                        const Vocabulary* fixed_vocab = nullptr) {
  std::vector<std::vector<std::string>> raw;
  std::vector<std::size_t> line_numbers;
  std::vector<std::size_t> column_of(schema.size());
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (internal::Trim(line).empty()) continue;
    auto fields = internal::SplitCsvLine(line);
    if (!fields)
      throw ParseError("line " + std::to_string(line_no) +
                       ": unterminated quoted field");
    if (!have_header) {
      have_header = true;
      if (fields->size() != schema.size())
        throw ParseError("header has " + std::to_string(fields->size()) +
                         " columns, schema has " +
                         std::to_string(schema.size()));
      for (std::size_t f = 0; f < schema.size(); ++f) {
        auto it = std::find(fields->begin(), fields->end(), schema[f].name);
        if (it == fields->end())
          throw ParseError("header lacks schema column '" + schema[f].name +
                           "'");
        column_of[f] = static_cast<std::size_t>(it - fields->begin());
      }
      continue;
    }
    if (fields->size() != schema.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(schema.size()) + " fields, got " +
                       std::to_string(fields->size()));
    raw.push_back(std::move(*fields));
    line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError("empty CSV: missing header row");

  Dataset ds;
  ds.schema = schema;
  if (fixed_vocab) {
    ds.vocab = *fixed_vocab;
  } else {
    std::vector<std::vector<std::string>> tokens(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (!schema[f].categorical()) continue;
      for (const auto& r : raw) tokens[f].push_back(r[column_of[f]]);
      std::sort(tokens[f].begin(), tokens[f].end());
      tokens[f].erase(std::unique(tokens[f].begin(), tokens[f].end()),
                      tokens[f].end());
      std::size_t limit = schema[f].cardinality -
                          (policy == VocabPolicy::kReserveUnknown ? 1 : 0);
      if (tokens[f].size() > limit)
        throw SchemaError("feature '" + schema[f].name + "' has " +
                          std::to_string(tokens[f].size()) +
                          " distinct values, cardinality allows " +
                          std::to_string(limit));
    }
    ds.vocab = Vocabulary(std::move(tokens));
  }

  ds.rows.reserve(raw.size());
  for (std::size_t r = 0; r < raw.size(); ++r) {
    Sample s;
    s.codes.assign(schema.size(), -1);
    s.numbers.assign(schema.size(), 0.0);
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const std::string& cell = raw[r][column_of[f]];
      if (schema[f].categorical()) {
        auto code = ds.vocab.Encode(f, cell);
        if (!code) {
          if (policy == VocabPolicy::kError)
            throw SchemaError("line " + std::to_string(line_numbers[r]) +
                              ": unseen value '" + cell + "' for feature '" +
                              schema[f].name + "'");
          code = schema[f].cardinality - 1;
        }
        s.codes[f] = *code;
      } else if (cell == "?" || cell.empty()) {
        s.numbers[f] = std::numeric_limits<double>::quiet_NaN();
      } else {
        auto v = internal::ParseDouble(cell);
        if (!v || !std::isfinite(*v))
          throw ParseError("line " + std::to_string(line_numbers[r]) +
                           ": feature '" + schema[f].name +
                           "' is not a number: '" + cell + "'");
        s.numbers[f] = *v;
      }
    }
    s.label = s.codes[schema.label_index()];
    internal::CheckRow(schema, s, line_numbers[r]);
    ds.rows.push_back(std::move(s));
  }
  return ds;
}

inline Dataset LoadCsv(const std::string& path, const FeatureSchema& schema,
                       VocabPolicy policy = VocabPolicy::kError,
                       const Vocabulary* fixed_vocab = nullptr) {
  return ParseCsv(internal::ReadFile(path), schema, policy, fixed_vocab);
}

inline SplitIndices SplitTrainTest(std::size_t n_rows, double ratio,
                                   std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("train ratio must lie in (0,1)");
  std::vector<std::size_t> perm(n_rows);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, streams::kSplit);
  Shuffle(std::span<std::size_t>(perm), rng);
  auto n_train = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(n_rows)));
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + n_train);
  out.test.assign(perm.begin() + n_train, perm.end());
  return out;
}

inline SplitIndices SplitTrainTest(const Dataset& ds, double ratio,
                                   std::uint64_t seed) {
  return SplitTrainTest(ds.size(), ratio, seed);
}

enum class BinStrategy { kEqualWidth, kQuantile };

// Upper-open bin edges for one numeric feature, fitted on `fit_rows`.
// bin(x) = number of inner edges <= x, so the mapping is monotone.
struct BinEdges {
  std::vector<double> inner;  // n_bins - 1 ascending edges

  int Bin(double x) const {
    return static_cast<int>(std::upper_bound(inner.begin(), inner.end(), x) -
                            inner.begin());
  }
};

inline BinEdges FitBins(std::vector<double> values, int n_bins,
                        BinStrategy strategy) {
  if (n_bins < 2) throw ConfigError("n_bins must be >= 2");
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) throw NumericError("no finite values to bin");
  std::sort(values.begin(), values.end());
  BinEdges edges;
  if (strategy == BinStrategy::kEqualWidth) {
    double lo = values.front(), hi = values.back();
    double width = (hi - lo) / n_bins;
    for (int j = 1; j < n_bins; ++j) edges.inner.push_back(lo + j * width);
  } else {
    for (int j = 1; j < n_bins; ++j) {
      double q = static_cast<double>(j) / n_bins;
      double pos = q * static_cast<double>(values.size() - 1);
      auto lo = static_cast<std::size_t>(std::floor(pos));
      auto hi = std::min(lo + 1, values.size() - 1);
      double frac = pos - static_cast<double>(lo);
      edges.inner.push_back(values[lo] + frac * (values[hi] - values[lo]));
    }
    for (std::size_t j = 1; j < edges.inner.size(); ++j)
      if (!(edges.inner[j] > edges.inner[j - 1]))
        throw NumericError("degenerate quantile bins (repeated edge " +
                           std::to_string(edges.inner[j]) + ")");
    if (values.front() == values.back())
      throw NumericError("degenerate quantile bins (constant feature)");
  }
  return edges;
}

// Re-encodes numeric `feature` as categorical(n_bins); edges come from the
// rows in `fit_rows` only (pass the train split). Missing values go to the
// bin of the fitted-rows mean.
inline Dataset BinNumeric(const Dataset& ds, std::string_view feature,
                          int n_bins, BinStrategy strategy,
                          std::span<const std::size_t> fit_rows) {
  std::size_t f = ds.schema.IndexOf(feature);
  if (ds.schema[f].categorical())
    throw SchemaError("feature '" + std::string(feature) + "' is not numeric");
  std::vector<double> fit;
  fit.reserve(fit_rows.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r : fit_rows) {
    double v = ds.rows.at(r).numbers[f];
    fit.push_back(v);
    if (!std::isnan(v)) sum += v, ++count;
  }
  BinEdges edges = FitBins(std::move(fit), n_bins, strategy);
  double fill = count ? sum / static_cast<double>(count) : 0.0;

  FeatureSpec spec = ds.schema[f];
  spec.kind = FeatureKind::kCategorical;
  spec.cardinality = n_bins;
  Dataset out;
  out.schema = ds.schema.With(f, spec);
  auto tokens = ds.vocab;
  auto& t = tokens.mutable_tokens();
  t.resize(ds.schema.size());
  t[f].clear();
  // Zero-padded so lexical order equals bin order.
  for (int b = 0; b < n_bins; ++b) {
    std::string s = std::to_string(b);
    t[f].push_back("bin" + std::string(6 - std::min<std::size_t>(6, s.size()), '0') + s);
  }
  out.vocab = std::move(tokens);
  out.rows = ds.rows;
  for (auto& s : out.rows) {
    double v = s.numbers[f];
    s.codes[f] = edges.Bin(std::isnan(v) ? fill : v);
    s.numbers[f] = 0.0;
  }
  return out;
}

inline Dataset BinNumeric(const Dataset& ds, std::string_view feature,
                          int n_bins, BinStrategy strategy) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return BinNumeric(ds, feature, n_bins, strategy, all);
}

// Random categorical/numeric features with labels drawn from a planted
// logistic model. The intercept is solved by bisection so that the mean
// positive probability equals `positive_rate`.
inline Dataset GenerateSynthetic(const FeatureSchema& schema,
                                 std::size_t n_rows, double positive_rate,
                                 std::uint64_t seed, double signal = 1.0) {
  if (!(positive_rate > 0.0 && positive_rate < 1.0))
    throw ConfigError("positive rate must lie in (0,1)");
  if (schema.client_features().empty())
    throw SchemaError("schema has no private client features to attack");
  Rng rng(seed, streams::kSynthetic);

  std::vector<std::vector<double>> cat_weight(schema.size());
  std::vector<double> num_weight(schema.size(), 0.0);
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].is_label) continue;
    if (schema[f].categorical()) {
      for (int c = 0; c < schema[f].cardinality; ++c)
        cat_weight[f].push_back(rng.Normal(0.0, signal));
    } else {
      num_weight[f] = rng.Normal(0.0, signal);
    }
  }

  Dataset ds;
  ds.schema = schema;
  std::vector<std::vector<std::string>> tokens(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (!schema[f].categorical()) continue;
    for (int c = 0; c < schema[f].cardinality; ++c) {
      std::string s = std::to_string(c);
      tokens[f].push_back("c" + std::string(6 - std::min<std::size_t>(6, s.size()), '0') + s);
    }
  }
  ds.vocab = Vocabulary(std::move(tokens));

  std::vector<double> logits(n_rows, 0.0);
  ds.rows.resize(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    Sample& s = ds.rows[r];
    s.codes.assign(schema.size(), -1);
    s.numbers.assign(schema.size(), 0.0);
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (schema[f].is_label) continue;
      if (schema[f].categorical()) {
        int c = static_cast<int>(rng.Below(schema[f].cardinality));
        s.codes[f] = c;
        logits[r] += cat_weight[f][c];
      } else {
        double v = rng.Normal();
        s.numbers[f] = v;
        logits[r] += num_weight[f] * v;
      }
    }
  }
  auto mean_prob = [&](double bias) {
    double acc = 0.0;
    for (double z : logits) acc += 1.0 / (1.0 + std::exp(-(z + bias)));
    return n_rows ? acc / static_cast<double>(n_rows) : positive_rate;
  };
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (mean_prob(mid) < positive_rate ? lo : hi) = mid;
  }
  double bias = 0.5 * (lo + hi);
  for (std::size_t r = 0; r < n_rows; ++r) {
    double p = 1.0 / (1.0 + std::exp(-(logits[r] + bias)));
    Sample& s = ds.rows[r];
    s.label = rng.Bernoulli(p) ? 1 : 0;
    s.codes[schema.label_index()] = s.label;
  }
  return ds;
}

// A small mixed schema used by tests, the self-test and the synthetic
// pipeline: two categorical and two numeric server features, three private
// client features and a binary label.
inline FeatureSchema DefaultSyntheticSchema() {
  return FeatureSchema::Parse(
      "s_cat_a,categorical,6,server,0\n"
      "s_cat_b,categorical,4,server,0\n"
      "s_num_a,numeric,-,server,0\n"
      "s_num_b,numeric,-,server,0\n"
      "c_gender,categorical,2,client,0\n"
      "c_group,categorical,5,client,0\n"
      "c_status,categorical,3,client,0\n"
      "label,categorical,2,client,1\n");
}

}  // namespace splitleak

#endif  // SPLITLEAK_DATA_H_
