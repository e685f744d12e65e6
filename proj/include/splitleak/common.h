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

#ifndef SPLITLEAK_COMMON_H_
#define SPLITLEAK_COMMON_H_

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace splitleak {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base of every error raised by the library. Subclasses name the contract
// that was violated so callers can report it without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Feature index out of range, malformed schema, cardinality overflow.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Malformed input text (CSV rows, schema lines, config files, checkpoints).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training, degenerate statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seeded random stream. Independent consumers (weight init, batch order,
// DP noise, label flips) take distinct `stream` ids derived from one run
// seed so that enabling one mechanism never perturbs another's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(SplitMix64(seed ^ SplitMix64(stream + 0x51ed2701ULL))) {}

  std::uint64_t Next() { return engine_(); }

  double Uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double Normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Uniform integer in [0, n).
  std::size_t Below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates; consumes exactly n-1 draws for n >= 2 and none otherwise.
template <typename T>
void Shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.Below(i);
    std::swap(items[i - 1], items[j]);
  }
}

// Well-known stream ids.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kBatchOrder = 2;
inline constexpr std::uint64_t kDpNoise = 3;
inline constexpr std::uint64_t kLabelFlip = 4;
inline constexpr std::uint64_t kFslPartition = 5;
inline constexpr std::uint64_t kSplit = 6;
inline constexpr std::uint64_t kProbeNoise = 7;
inline constexpr std::uint64_t kProbeLabelFlip = 8;
inline constexpr std::uint64_t kSynthetic = 9;
}  // namespace streams

inline bool AllFinite(const Matrix& m) { return m.allFinite(); }

// FNV-1a, used for schema and config fingerprints.
inline std::uint64_t Fnv1a(std::string_view text,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace splitleak

#endif  // SPLITLEAK_COMMON_H_
