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

// Experiment runner behind the `splitleak` tool: config files, the
// train -> attack -> baseline pipeline, result records and summaries.
//
// Config grammar (INI style; '#' or ';' start a comment line):
//
//   [data]      csv, schema, vocab_policy (error|reserve_unknown), split_ratio
//   [model]     embed_dim, cut_width, server_hidden, client_hidden,
//               embedding_init_stddev
//   [train]     learning_rate, adagrad_epsilon, batch_size, epochs,
//               mode (sl|fsl), fsl_samples_per_client, keep_best_epoch
//   [dp]        enabled, noise_multiplier, clip_mode (adaptive_median|fixed),
//               fixed_clip, clip_fraction, delta, warmup, median_step
//   [label_dp]  enabled, flip_probability
//   [attack]    variant (exact|topk), k, max_samples (0 = whole test split),
//               enumeration_cap, threads (0 = all cores)
//   [baseline]  k
//   [run]       seed, repetitions, out
//
// Hidden-layer lists are comma separated ("256,128"; empty for none).
// Relative paths resolve against the config file's directory. Unknown
// sections or keys are errors.

#ifndef SPLITLEAK_EXPERIMENT_H_
#define SPLITLEAK_EXPERIMENT_H_

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "splitleak/attack.h"
#include "splitleak/checkpoint.h"
#include "splitleak/data.h"
#include "splitleak/dp.h"
#include "splitleak/metrics.h"
#include "splitleak/protocol.h"

namespace splitleak {

struct AttackConfig {
  AttackVariant variant = AttackVariant::kExact;
  std::size_t k = 5;  // top-k only
  std::size_t max_samples = 2000;
  std::size_t enumeration_cap = kDefaultEnumerationCap;
  unsigned threads = 0;
};

struct ExperimentConfig {
  std::string csv;     // as written in the config
  std::string schema;  // as written in the config
  std::filesystem::path base_dir;
  VocabPolicy vocab_policy = VocabPolicy::kError;
  double split_ratio = 0.9;
  TrainConfig train;
  AttackConfig attack;
  std::size_t baseline_k = 5;
  int repetitions = 1;
  std::string out = "splitleak-out";

  std::filesystem::path CsvPath() const { return Resolve(csv); }
  std::filesystem::path SchemaPath() const { return Resolve(schema); }
  std::filesystem::path OutDir() const { return Resolve(out); }

  std::filesystem::path Resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }

  void Validate() const {
    if (csv.empty()) throw ConfigError("[data] csv is required");
    if (schema.empty()) throw ConfigError("[data] schema is required");
    if (!std::filesystem::exists(CsvPath()))
      throw ConfigError("data file '" + CsvPath().string() + "' does not exist");
    if (!std::filesystem::exists(SchemaPath()))
      throw ConfigError("schema file '" + SchemaPath().string() +
                        "' does not exist");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
      throw ConfigError("split_ratio must lie in (0, 1)");
    train.Validate();
    if (attack.variant == AttackVariant::kTopK && attack.k < 1)
      throw ConfigError("top-k attack needs k >= 1");
    if (baseline_k < 1) throw ConfigError("baseline k must be >= 1");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    FeatureSchema s = FeatureSchema::Load(SchemaPath().string());
    auto cards = PrivateCardinalities(s);
    std::size_t total = ConfigurationCount(cards);
    if (total > attack.enumeration_cap)
      EnumerateConfigurations(cards, attack.enumeration_cap);  // throws
    if (attack.variant == AttackVariant::kTopK && attack.k > total)
      throw ConfigError("top-k k = " + std::to_string(attack.k) +
                        " exceeds |L| = " + std::to_string(total));
  }

  // Settings that determine the trained model.
  std::string TrainingText() const {
    std::ostringstream o;
    o.precision(17);
    const auto& a = train.arch;
    auto list = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    o << "[data]\ncsv = " << csv << "\nschema = " << schema
      << "\nvocab_policy = "
      << (vocab_policy == VocabPolicy::kError ? "error" : "reserve_unknown")
      << "\nsplit_ratio = " << split_ratio << "\n";
    o << "[model]\nembed_dim = " << a.embed_dim << "\ncut_width = "
      << a.cut_width << "\nserver_hidden = " << list(a.server_hidden)
      << "\nclient_hidden = " << list(a.client_hidden)
      << "\nembedding_init_stddev = " << a.embedding_init_stddev << "\n";
    o << "[train]\nlearning_rate = " << train.learning_rate
      << "\nadagrad_epsilon = " << train.adagrad_epsilon
      << "\nbatch_size = " << train.batch_size << "\nepochs = " << train.epochs
      << "\nmode = " << (train.mode == TrainingMode::kSl ? "sl" : "fsl")
      << "\nfsl_samples_per_client = " << train.fsl_samples_per_client
      << "\nkeep_best_epoch = " << (train.keep_best_epoch ? "true" : "false")
      << "\n";
    o << "[dp]\nenabled = " << (train.dp ? "true" : "false") << "\n";
    if (train.dp) {
      const auto& d = *train.dp;
      o << "noise_multiplier = " << d.noise_multiplier << "\nclip_mode = "
        << (d.clip_mode == ClipMode::kFixed ? "fixed" : "adaptive_median")
        << "\nfixed_clip = " << d.fixed_clip
        << "\nclip_fraction = " << d.clip_fraction << "\ndelta = " << d.delta
        << "\nwarmup = " << d.warmup << "\nmedian_step = " << d.median_step
        << "\n";
    }
    o << "[label_dp]\nenabled = " << (train.label_dp ? "true" : "false")
      << "\n";
    if (train.label_dp)
      o << "flip_probability = " << train.label_dp->flip_probability << "\n";
    o << "[run]\nseed = " << train.seed << "\n";
    return o.str();
  }

  std::string CanonicalText() const {
    std::ostringstream o;
    o << TrainingText() << "repetitions = " << repetitions
      << "\n[attack]\nvariant = "
      << (attack.variant == AttackVariant::kExact ? "exact" : "topk")
      << "\nk = " << attack.k << "\nmax_samples = " << attack.max_samples
      << "\nenumeration_cap = " << attack.enumeration_cap
      << "\n[baseline]\nk = " << baseline_k << "\n";
    return o.str();
  }

  std::uint64_t TrainingHash() const { return Fnv1a(TrainingText()); }
  std::uint64_t Hash() const { return Fnv1a(CanonicalText()); }

  std::string Scenario() const {
    auto num = [](double v) {
      std::ostringstream o;
      o << v;
      return o.str();
    };
    std::string tag;
    if (train.dp && train.label_dp)
      tag = "Comb(p=" + num(train.label_dp->flip_probability) +
            ",sigma=" + num(train.dp->noise_multiplier) + ")";
    else if (train.dp)
      tag = "DP(" + num(train.dp->noise_multiplier) + ")";
    else if (train.label_dp)
      tag = "LabelDP(" + num(train.label_dp->flip_probability) + ")";
    if (train.mode == TrainingMode::kFsl) return tag.empty() ? "FSL" : "FSL+" + tag;
    return tag.empty() ? "SL" : tag;
  }

  std::uint64_t RepetitionSeed(int rep) const {
    return train.seed + static_cast<std::uint64_t>(rep);
  }
};

inline std::string HexHash(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace internal {

inline double ParseReal(const std::string& key, const std::string& v) {
  auto d = ParseDouble(Trim(v));
  if (!d) throw ConfigError(key + ": '" + v + "' is not a number");
  return *d;
}

inline long long ParseInteger(const std::string& key, const std::string& v) {
  std::string t = Trim(v);
  long long out = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size())
    throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

inline std::size_t ParseCount(const std::string& key, const std::string& v) {
  long long n = ParseInteger(key, v);
  if (n < 0) throw ConfigError(key + " must be >= 0");
  return static_cast<std::size_t>(n);
}

inline bool ParseBool(const std::string& key, const std::string& v) {
  std::string t = Trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<int> ParseWidths(const std::string& key,
                                    const std::string& v) {
  std::vector<int> out;
  if (Trim(v).empty()) return out;
  for (const auto& part : SplitPlain(v, ','))
    out.push_back(static_cast<int>(ParseInteger(key, part)));
  return out;
}

}  // namespace internal

inline ExperimentConfig ParseExperimentConfig(
    std::string_view text, const std::filesystem::path& base_dir = {}) {
  namespace pt = boost::property_tree;
  using internal::ParseBool;
  using internal::ParseCount;
  using internal::ParseInteger;
  using internal::ParseReal;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("config line " + std::to_string(e.line()) + ": " +
                     e.message());
  }

  ExperimentConfig c;
  c.base_dir = base_dir;
  bool dp_enabled = false, label_dp_enabled = false;
  DpConfig dp;
  LabelDpConfig ldp;
  auto& t = c.train;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> table = {
      {"data",
       {{"csv", [&](auto&, auto& v) { c.csv = internal::Trim(v); }},
        {"schema", [&](auto&, auto& v) { c.schema = internal::Trim(v); }},
        {"vocab_policy",
         [&](auto& k, auto& v) {
           std::string s = internal::Trim(v);
           if (s == "error")
             c.vocab_policy = VocabPolicy::kError;
           else if (s == "reserve_unknown")
             c.vocab_policy = VocabPolicy::kReserveUnknown;
           else
             throw ConfigError(k + ": expected error or reserve_unknown");
         }},
        {"split_ratio",
         [&](auto& k, auto& v) { c.split_ratio = ParseReal(k, v); }}}},
      {"model",
       {{"embed_dim",
         [&](auto& k, auto& v) {
           t.arch.embed_dim = static_cast<int>(ParseInteger(k, v));
         }},
        {"cut_width",
         [&](auto& k, auto& v) {
           t.arch.cut_width = static_cast<int>(ParseInteger(k, v));
         }},
        {"server_hidden",
         [&](auto& k, auto& v) {
           t.arch.server_hidden = internal::ParseWidths(k, v);
         }},
        {"client_hidden",
         [&](auto& k, auto& v) {
           t.arch.client_hidden = internal::ParseWidths(k, v);
         }},
        {"embedding_init_stddev",
         [&](auto& k, auto& v) {
           t.arch.embedding_init_stddev = ParseReal(k, v);
         }}}},
      {"train",
       {{"learning_rate",
         [&](auto& k, auto& v) { t.learning_rate = ParseReal(k, v); }},
        {"adagrad_epsilon",
         [&](auto& k, auto& v) { t.adagrad_epsilon = ParseReal(k, v); }},
        {"batch_size",
         [&](auto& k, auto& v) {
           t.batch_size = static_cast<int>(ParseInteger(k, v));
         }},
        {"epochs",
         [&](auto& k, auto& v) {
           t.epochs = static_cast<int>(ParseInteger(k, v));
         }},
        {"mode",
         [&](auto& k, auto& v) {
           std::string s = internal::Trim(v);
           if (s == "sl")
             t.mode = TrainingMode::kSl;
           else if (s == "fsl")
             t.mode = TrainingMode::kFsl;
           else
             throw ConfigError(k + ": expected sl or fsl");
         }},
        {"fsl_samples_per_client",
         [&](auto& k, auto& v) {
           t.fsl_samples_per_client = static_cast<int>(ParseInteger(k, v));
         }},
        {"keep_best_epoch",
         [&](auto& k, auto& v) { t.keep_best_epoch = ParseBool(k, v); }}}},
      {"dp",
       {{"enabled", [&](auto& k, auto& v) { dp_enabled = ParseBool(k, v); }},
        {"noise_multiplier",
         [&](auto& k, auto& v) { dp.noise_multiplier = ParseReal(k, v); }},
        {"clip_mode",
         [&](auto& k, auto& v) {
           std::string s = internal::Trim(v);
           if (s == "adaptive_median")
             dp.clip_mode = ClipMode::kAdaptiveMedian;
           else if (s == "fixed")
             dp.clip_mode = ClipMode::kFixed;
           else
             throw ConfigError(k + ": expected adaptive_median or fixed");
         }},
        {"fixed_clip",
         [&](auto& k, auto& v) { dp.fixed_clip = ParseReal(k, v); }},
        {"clip_fraction",
         [&](auto& k, auto& v) { dp.clip_fraction = ParseReal(k, v); }},
        {"delta", [&](auto& k, auto& v) { dp.delta = ParseReal(k, v); }},
        {"warmup", [&](auto& k, auto& v) { dp.warmup = ParseCount(k, v); }},
        {"median_step",
         [&](auto& k, auto& v) { dp.median_step = ParseReal(k, v); }}}},
      {"label_dp",
       {{"enabled",
         [&](auto& k, auto& v) { label_dp_enabled = ParseBool(k, v); }},
        {"flip_probability",
         [&](auto& k, auto& v) { ldp.flip_probability = ParseReal(k, v); }}}},
      {"attack",
       {{"variant",
         [&](auto& k, auto& v) {
           std::string s = internal::Trim(v);
           if (s == "exact")
             c.attack.variant = AttackVariant::kExact;
           else if (s == "topk")
             c.attack.variant = AttackVariant::kTopK;
           else
             throw ConfigError(k + ": expected exact or topk");
         }},
        {"k", [&](auto& k, auto& v) { c.attack.k = ParseCount(k, v); }},
        {"max_samples",
         [&](auto& k, auto& v) { c.attack.max_samples = ParseCount(k, v); }},
        {"enumeration_cap",
         [&](auto& k, auto& v) {
           c.attack.enumeration_cap = ParseCount(k, v);
         }},
        {"threads",
         [&](auto& k, auto& v) {
           c.attack.threads = static_cast<unsigned>(ParseCount(k, v));
         }}}},
      {"baseline",
       {{"k", [&](auto& k, auto& v) { c.baseline_k = ParseCount(k, v); }}}},
      {"run",
       {{"seed",
         [&](auto& k, auto& v) {
           t.seed = static_cast<std::uint64_t>(ParseCount(k, v));
         }},
        {"repetitions",
         [&](auto& k, auto& v) {
           c.repetitions = static_cast<int>(ParseInteger(k, v));
         }},
        {"out", [&](auto&, auto& v) { c.out = internal::Trim(v); }}}},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("config key '" + section + "' outside any section");
    auto sec = table.find(section);
    if (sec == table.end())
      throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, node] : body) {
      auto it = sec->second.find(key);
      if (it == sec->second.end())
        throw ConfigError("unknown config key '" + key + "' in [" + section +
                          "]");
      if (!node.empty())
        throw ConfigError("config key '" + key + "' must be a plain value");
      it->second(section + "." + key, node.data());
    }
  }
  if (dp_enabled) t.dp = dp;
  if (label_dp_enabled) t.label_dp = ldp;
  return c;
}

inline ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("config file '" + path.string() + "' does not exist");
  return ParseExperimentConfig(internal::ReadFile(path.string()),
                               path.parent_path());
}

// ------------------------------------------------------------------ records

struct ResultRecord {
  std::string scenario;
  std::string variant;  // "-", "exact", "topk-5", "knn-5"
  std::string metric;   // auc, f1, accuracy, mean_feature_f1
  std::string feature;  // "-" for model-level metrics
  int cardinality = 0;
  double value = 0.0;
  std::uint64_t seed = 0;
  int repetition = 0;
  std::string config_hash;

  nlohmann::ordered_json ToJson() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario;
    j["variant"] = variant;
    j["metric"] = metric;
    j["feature"] = feature;
    j["cardinality"] = cardinality;
    j["value"] = value;
    j["seed"] = seed;
    j["repetition"] = repetition;
    j["config_hash"] = config_hash;
    return j;
  }

  static ResultRecord FromJson(const nlohmann::json& j) {
    ResultRecord r;
    r.scenario = j.at("scenario").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.feature = j.at("feature").get<std::string>();
    r.cardinality = j.at("cardinality").get<int>();
    r.value = j.at("value").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.repetition = j.at("repetition").get<int>();
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
  }

  // Identity used when a stage re-writes its own rows.
  std::string Key() const {
    return config_hash + '\t' + scenario + '\t' + variant + '\t' + metric +
           '\t' + feature + '\t' + std::to_string(repetition);
  }
};

inline std::vector<ResultRecord> ReadResults(const std::filesystem::path& path) {
  std::vector<ResultRecord> out;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read results '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (internal::Trim(line).empty()) continue;
    try {
      out.push_back(ResultRecord::FromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " +
                       e.what());
    }
  }
  return out;
}

inline void WriteResults(const std::filesystem::path& path,
                         std::span<const ResultRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  for (const auto& r : records) out << r.ToJson().dump() << '\n';
}

// Replaces rows with the same key, appends new ones; order of first
// appearance is kept.
inline std::vector<ResultRecord> MergeResults(std::vector<ResultRecord> base,
                                              std::span<const ResultRecord> add) {
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < base.size(); ++i) at[base[i].Key()] = i;
  for (const auto& r : add) {
    auto it = at.find(r.Key());
    if (it != at.end()) {
      base[it->second] = r;
    } else {
      at[r.Key()] = base.size();
      base.push_back(r);
    }
  }
  return base;
}

struct SummaryRow {
  std::string config_hash, scenario, variant, metric, feature;
  int cardinality = 0;
  std::vector<double> values;

  double Mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  // Sample standard deviation; 0 for a single repetition.
  double Std() const {
    if (values.size() < 2) return 0.0;
    double m = Mean(), s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

inline std::vector<SummaryRow> Summarize(std::span<const ResultRecord> records) {
  std::vector<SummaryRow> rows;
  std::map<std::string, std::size_t> at;
  for (const auto& r : records) {
    std::string key = r.config_hash + '\t' + r.scenario + '\t' + r.variant +
                      '\t' + r.metric + '\t' + r.feature;
    auto it = at.find(key);
    if (it == at.end()) {
      at[key] = rows.size();
      rows.push_back({r.config_hash, r.scenario, r.variant, r.metric, r.feature,
                      r.cardinality, {}});
      it = at.find(key);
    }
    rows[it->second].values.push_back(r.value);
  }
  return rows;
}

inline std::string FormatSummary(std::span<const SummaryRow> rows) {
  std::ostringstream o;
  o << "config_hash\tscenario\tvariant\tmetric\tfeature\tcardinality\tn\tmean\t"
       "std\tmean_pm_std\n";
  o << std::fixed;
  for (const auto& r : rows) {
    o << r.config_hash << '\t' << r.scenario << '\t' << r.variant << '\t'
      << r.metric << '\t' << r.feature << '\t' << r.cardinality << '\t'
      << r.values.size() << '\t' << std::setprecision(6) << r.Mean() << '\t'
      << r.Std() << '\t' << std::setprecision(4) << r.Mean() << " ± "
      << r.Std() << '\n';
  }
  return o.str();
}

inline void WriteSummary(const std::filesystem::path& dir,
                         std::span<const ResultRecord> records) {
  std::ofstream out(dir / "summary.tsv", std::ios::trunc);
  if (!out) throw ConfigError("cannot write summary.tsv in " + dir.string());
  auto rows = Summarize(records);
  out << FormatSummary(rows);
}

// ----------------------------------------------------------------- pipeline

enum class Stage { kTrain, kAttack, kBaseline, kRun };

inline std::string CheckpointName(int rep) {
  return rep == 0 ? "checkpoint.bin"
                  : "checkpoint.rep" + std::to_string(rep) + ".bin";
}

inline std::vector<ResultRecord> ReportToRecords(
    const AttackReport& rep, const ResultRecord& proto, bool with_accuracy) {
  std::vector<ResultRecord> out;
  auto add = [&](const FeatureScore& s) {
    ResultRecord r = proto;
    r.metric = "f1";
    r.feature = s.name;
    r.cardinality = s.cardinality;
    r.value = s.f1;
    out.push_back(r);
    if (with_accuracy) {
      r.metric = "accuracy";
      r.value = s.accuracy;
      out.push_back(r);
    }
  };
  for (const auto& f : rep.features) add(f);
  add(rep.label);
  ResultRecord m = proto;
  m.metric = "mean_feature_f1";
  m.feature = "-";
  m.value = rep.MeanFeatureF1();
  out.push_back(m);
  return out;
}

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config) : config_(std::move(config)) {
    config_.Validate();
    schema_ = FeatureSchema::Load(config_.SchemaPath().string());
    hash_ = HexHash(config_.Hash());
  }

  const ExperimentConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }

  // Executes one stage for every repetition and persists its artifacts in
  // the output directory. Returns the records this call produced.
  std::vector<ResultRecord> Execute(Stage stage, std::ostream& console) {
    auto dir = config_.OutDir();
    std::filesystem::create_directories(dir);
    auto marker = dir / "INCOMPLETE";
    {
      std::ofstream m(marker, std::ios::trunc);
      m << "stage " << StageName(stage) << " started\n";
    }
    try {
      auto records = ExecuteUnflagged(stage, console, dir);
      std::filesystem::remove(marker);
      return records;
    } catch (const std::exception& e) {
      std::ofstream m(marker, std::ios::app);
      m << "failed: " << e.what() << '\n';
      throw;
    }
  }

  static std::string StageName(Stage s) {
    switch (s) {
      case Stage::kTrain: return "train";
      case Stage::kAttack: return "attack";
      case Stage::kBaseline: return "baseline";
      case Stage::kRun: return "run";
    }
    return "?";
  }

 private:
  std::vector<ResultRecord> ExecuteUnflagged(Stage stage, std::ostream& console,
                                             const std::filesystem::path& dir) {
    LoadData();
    std::vector<ResultRecord> records;
    std::ofstream train_log, attack_log;
    bool training = stage == Stage::kTrain || stage == Stage::kRun;
    bool attacking = stage == Stage::kAttack || stage == Stage::kRun;
    bool baselines = stage == Stage::kBaseline || stage == Stage::kRun;
    if (training) {
      train_log.open(dir / "train.log", std::ios::trunc);
      train_log << "# splitleak training log\n# config_hash " << hash_ << "\n"
                << config_.CanonicalText();
    }
    if (attacking) {
      attack_log.open(dir / "attack.log", std::ios::trunc);
      std::ofstream(dir / "outcomes.jsonl", std::ios::trunc);
    }
    for (int rep = 0; rep < config_.repetitions; ++rep) {
      std::uint64_t seed = config_.RepetitionSeed(rep);
      SplitIndices split = SplitTrainTest(ds_, config_.split_ratio, seed);
      Checkpoint ckpt;
      if (training) {
        ckpt = TrainOne(rep, seed, split, train_log, console, records);
        SaveCheckpoint(ckpt, (dir / CheckpointName(rep)).string());
      } else {
        ckpt = LoadAndCheck(dir / CheckpointName(rep));
      }
      if (attacking) AttackOne(rep, seed, split, ckpt, attack_log, console, records);
      if (baselines) BaselineOne(rep, seed, split, ckpt, console, records);
    }
    std::vector<ResultRecord> all;
    auto results = dir / "results.jsonl";
    if (stage != Stage::kRun && stage != Stage::kTrain &&
        std::filesystem::exists(results))
      all = ReadResults(results);
    all = MergeResults(std::move(all), records);
    WriteResults(results, all);
    WriteSummary(dir, all);
    return records;
  }

  void LoadData() {
    if (loaded_) return;
    ds_ = LoadCsv(config_.CsvPath().string(), schema_, config_.vocab_policy);
    loaded_ = true;
  }

  ResultRecord Proto(int rep, std::uint64_t seed) const {
    ResultRecord r;
    r.scenario = config_.Scenario();
    r.seed = seed;
    r.repetition = rep;
    r.config_hash = hash_;
    return r;
  }

  Checkpoint TrainOne(int rep, std::uint64_t seed, const SplitIndices& split,
                      std::ostream& log, std::ostream& console,
                      std::vector<ResultRecord>& records) {
    TrainConfig tc = config_.train;
    tc.seed = seed;
    log << "\n[repetition " << rep << "]\nseed " << seed << "\nrows "
        << ds_.size() << " train " << split.train.size() << " test "
        << split.test.size() << "\nscenario " << config_.Scenario() << '\n';
    TrainResult res = Train(ds_, split, tc);
    const auto& L = res.log;
    log << "mode " << (L.mode == TrainingMode::kSl ? "sl" : "fsl")
        << "\nbatch_size " << L.batch_size << "\nsteps " << L.steps << '\n';
    if (L.mode == TrainingMode::kFsl)
      log << "fsl_clients " << L.client_count << " samples_per_client "
          << tc.fsl_samples_per_client << '\n';
    if (L.dp)
      log << "dp sigma " << L.dp->noise_multiplier << " clip "
          << L.dp->ClipPolicy() << " delta " << L.dp->delta << " steps "
          << L.steps << " batch " << L.batch_size << " epsilon "
          << "delegated-to-external-accountant\n";
    if (res.clip)
      log << "dp final_clip_norm " << res.clip->clip_norm()
          << " median_estimate " << res.clip->median_estimate()
          << " observed " << res.clip->observed() << '\n';
    if (L.label_dp) {
      double p = L.label_dp->flip_probability;
      log << "label_dp p " << p << " epsilon ";
      if (p > 0.0)
        log << LabelDpEpsilon(p);
      else
        log << "inf";
      log << " flipped " << L.flipped_labels << " of " << split.train.size()
          << '\n';
    }
    for (const auto& e : L.epochs)
      log << "epoch " << e.epoch << " loss " << e.train_loss << " test_auc "
          << e.test_auc << " seconds " << e.wall_seconds << '\n';
    log << "best_epoch " << L.best_epoch << '\n';
    log.flush();

    double auc = split.test.empty()
                     ? std::nan("")
                     : EvaluateAuc(res.server, res.client, ds_, split.test);
    ResultRecord r = Proto(rep, seed);
    r.variant = "-";
    r.metric = "auc";
    r.feature = "-";
    r.value = auc;
    records.push_back(r);
    console << "rep " << rep << " seed " << seed << " " << config_.Scenario()
            << " test AUC " << std::fixed << std::setprecision(4) << auc
            << std::defaultfloat << " (best epoch " << L.best_epoch << ")\n";

    Checkpoint c;
    c.schema = ds_.schema;
    c.vocab = ds_.vocab;
    c.seed = seed;
    c.config_hash = config_.TrainingHash();
    c.mode = L.mode;
    c.best_epoch = L.best_epoch;
    c.label_dp = tc.label_dp;
    c.server = std::move(res.server);
    c.client = std::move(res.client);
    c.clip = std::move(res.clip);
    return c;
  }

  Checkpoint LoadAndCheck(const std::filesystem::path& path) const {
    if (!std::filesystem::exists(path))
      throw ConfigError("no checkpoint at '" + path.string() +
                        "'; run `train` first");
    Checkpoint c = LoadCheckpoint(path.string());
    if (c.config_hash != config_.TrainingHash())
      throw ConfigError("checkpoint '" + path.string() +
                        "' was trained with a different configuration");
    if (!(c.schema == ds_.schema) || !(c.vocab == ds_.vocab))
      throw ConfigError("checkpoint '" + path.string() +
                        "' does not match the dataset encoding");
    return c;
  }

  std::vector<std::size_t> AttackRows(const SplitIndices& split) const {
    std::size_t n = split.test.size();
    if (config_.attack.max_samples > 0)
      n = std::min(n, config_.attack.max_samples);
    return {split.test.begin(),
            split.test.begin() + static_cast<std::ptrdiff_t>(n)};
  }

  void AttackOne(int rep, std::uint64_t seed, const SplitIndices& split,
                 const Checkpoint& ckpt, std::ostream& log,
                 std::ostream& console, std::vector<ResultRecord>& records) {
    auto rows = AttackRows(split);
    if (rows.empty()) throw ConfigError("test split is empty; nothing to attack");
    TrainConfig probe = config_.train;
    probe.seed = seed;
    probe.label_dp = ckpt.label_dp;
    probe.dp.reset();
    if (ckpt.clip) probe.dp = ckpt.clip->config();
    auto obs = ObserveGradients(ckpt.server, ckpt.client, ds_, rows, probe,
                                ckpt.clip);
    auto L = EnumerateConfigurations(schema_, config_.attack.enumeration_cap);
    AttackSettings s;
    s.variant = config_.attack.variant;
    s.k = s.variant == AttackVariant::kExact ? 1 : config_.attack.k;
    s.threads = config_.attack.threads;
    auto t0 = std::chrono::steady_clock::now();
    auto outcomes = AttackObservations(ckpt.client, obs, L, s);
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    double max_sample = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      outcomes[i].truth = TrueConfiguration(ds_, rows[i]);
      max_sample = std::max(
          max_sample,
          std::chrono::duration<double>(outcomes[i].elapsed).count());
    }
    std::string variant =
        s.variant == AttackVariant::kExact ? "exact" : "topk-" + std::to_string(s.k);
    AttackReport report = EvaluateAttack(outcomes, schema_);
    ResultRecord proto = Proto(rep, seed);
    proto.variant = variant;
    auto recs = ReportToRecords(report, proto, true);
    records.insert(records.end(), recs.begin(), recs.end());
    WriteOutcomes(rep, variant, outcomes);

    log << "repetition " << rep << " seed " << seed << " variant " << variant
        << " samples " << rows.size() << " candidates " << L.size()
        << " seconds " << secs << " mean_seconds_per_sample "
        << secs / static_cast<double>(rows.size())
        << " max_seconds_per_sample " << max_sample << '\n';
    console << "rep " << rep << " attack " << variant << " |L| " << L.size()
            << " on " << rows.size() << " samples ("
            << std::setprecision(3) << secs / static_cast<double>(rows.size()) * 1e3
            << std::defaultfloat << " ms/sample)\n";
    PrintReport(console, report);
  }

  void WriteOutcomes(int rep, const std::string& variant,
                     std::span<const AttackOutcome> outcomes) const {
    std::ofstream out(config_.OutDir() / "outcomes.jsonl", std::ios::app);
    const auto& client = schema_.client_features();
    for (const auto& o : outcomes) {
      nlohmann::ordered_json j, pred, truth;
      j["repetition"] = rep;
      j["variant"] = variant;
      j["sample_id"] = o.sample_id;
      for (std::size_t f = 0; f < client.size(); ++f) {
        pred[schema_[client[f]].name] =
            ds_.vocab.Decode(client[f], o.predicted.features[f]);
        truth[schema_[client[f]].name] =
            ds_.vocab.Decode(client[f], o.truth->features[f]);
      }
      std::size_t li = schema_.label_index();
      pred[schema_[li].name] = ds_.vocab.Decode(li, o.predicted.label);
      truth[schema_[li].name] = ds_.vocab.Decode(li, o.truth->label);
      j["predicted"] = pred;
      j["truth"] = truth;
      j["correct"] = o.predicted == *o.truth;
      j["distance"] = o.distance;
      j["runner_up_distance"] =
          std::isfinite(o.runner_up_distance) ? nlohmann::ordered_json(o.runner_up_distance)
                                              : nlohmann::ordered_json(nullptr);
      j["candidates"] = o.candidates_evaluated;
      out << j.dump() << '\n';
    }
  }

  void BaselineOne(int rep, std::uint64_t seed, const SplitIndices& split,
                   const Checkpoint& ckpt, std::ostream& console,
                   std::vector<ResultRecord>& records) {
    auto rows = AttackRows(split);
    if (rows.empty()) throw ConfigError("test split is empty");
    std::size_t k = config_.baseline_k;
    KnnFeatureBaseline features(ds_, split.train);
    auto activations = KnnActivationBaseline::Build(ckpt.server, ds_, split.train);
    std::vector<CandidateConfiguration> pf, pa, truth;
    for (std::size_t r : rows) {
      pf.push_back(features.Predict(ds_.ServerView(r), k));
      pa.push_back(activations.Predict(ForwardServer(ckpt.server, ds_.ServerView(r)), k));
      truth.push_back(TrueConfiguration(ds_, r));
    }
    std::string variant = "knn-" + std::to_string(k);
    for (auto [name, preds] :
         {std::pair<std::string, const std::vector<CandidateConfiguration>*>{
              "baseline-features", &pf},
          {"baseline-output", &pa}}) {
      AttackReport report = EvaluatePredictions(*preds, truth, schema_);
      ResultRecord proto = Proto(rep, seed);
      proto.scenario = name;
      proto.variant = variant;
      auto recs = ReportToRecords(report, proto, false);
      records.insert(records.end(), recs.begin(), recs.end());
      console << "rep " << rep << " " << name << " (" << variant << ")\n";
      PrintReport(console, report);
    }
  }

  static void PrintReport(std::ostream& o, const AttackReport& r) {
    auto line = [&](const FeatureScore& s) {
      o << "  " << std::left << std::setw(24)
        << (s.name + "(" + std::to_string(s.cardinality) + ")") << std::right
        << " F1 " << std::fixed << std::setprecision(4) << s.f1 << "  acc "
        << s.accuracy << std::defaultfloat << '\n';
    };
    for (const auto& f : r.features) line(f);
    line(r.label);
  }

  ExperimentConfig config_;
  FeatureSchema schema_;
  std::string hash_;
  Dataset ds_;
  bool loaded_ = false;
};

// Merges result files (or directories holding results.jsonl) in argument
// order and writes the combined summary.
inline std::vector<ResultRecord> MergeRuns(
    std::span<const std::filesystem::path> inputs) {
  std::vector<ResultRecord> all;
  for (const auto& in : inputs) {
    auto path = std::filesystem::is_directory(in) ? in / "results.jsonl" : in;
    auto recs = ReadResults(path);
    all = MergeResults(std::move(all), recs);
  }
  return all;
}

}  // namespace splitleak

#endif  // SPLITLEAK_EXPERIMENT_H_
