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

// Client-side mitigations: per-sample clipping plus Gaussian noise on the
// cut-layer gradient, and randomized response on training labels.

#ifndef SPLITLEAK_DP_H_
#define SPLITLEAK_DP_H_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "splitleak/common.h"
#include "splitleak/nn.h"

namespace splitleak {

enum class ClipMode { kAdaptiveMedian, kFixed };

struct DpConfig {
  double noise_multiplier = 0.01;
  ClipMode clip_mode = ClipMode::kAdaptiveMedian;
  double fixed_clip = 1.0;     // used when clip_mode == kFixed
  double clip_fraction = 0.5;  // C = clip_fraction * median norm (adaptive)
  double delta = 1e-5;         // reported only
  std::size_t warmup = 1024;
  double median_step = 0.01;   // geometric step of the post-warm-up tracker

  void Validate() const {
    if (!(noise_multiplier >= 0.0))
      throw ConfigError("noise multiplier must be >= 0");
    if (clip_mode == ClipMode::kFixed && !(fixed_clip > 0.0))
      throw ConfigError("fixed clip norm must be > 0");
    if (!(clip_fraction > 0.0)) throw ConfigError("clip fraction must be > 0");
    if (warmup == 0) throw ConfigError("clip warm-up must be >= 1");
  }

  std::string ClipPolicy() const {
    if (clip_mode == ClipMode::kFixed)
      return "fixed(" + std::to_string(fixed_clip) + ")";
    return "adaptive_median(fraction=" + std::to_string(clip_fraction) +
           ",warmup=" + std::to_string(warmup) + ")";
  }
};

struct LabelDpConfig {
  double flip_probability = 0.1;

  void Validate() const {
    if (!(flip_probability >= 0.0 && flip_probability < 0.5))
      throw ConfigError("flip probability must lie in [0, 0.5)");
  }
};

// Streaming estimate of the median per-sample cut-gradient norm. The first
// `warmup` norms are kept and their exact median is used; afterwards the
// estimate moves geometrically toward each new norm:
//   m <- m * exp(+step)  if norm > m,   m * exp(-step) if norm < m.
class ClipState {
 public:
  ClipState() = default;
  explicit ClipState(const DpConfig& config) : config_(config) {
    config_.Validate();
  }

  void Observe(double norm) {
    ++observed_;
    if (buffer_.size() < config_.warmup) {
      buffer_.push_back(norm);
      std::vector<double> tmp = buffer_;
      auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
      std::nth_element(tmp.begin(), mid, tmp.end());
      if (tmp.size() % 2 == 1) {
        median_ = *mid;
      } else {
        double upper = *mid;
        double lower = *std::max_element(tmp.begin(), mid);
        median_ = 0.5 * (lower + upper);
      }
      return;
    }
    if (norm > median_)
      median_ *= std::exp(config_.median_step);
    else if (norm < median_)
      median_ *= std::exp(-config_.median_step);
  }

  double median_estimate() const { return median_; }
  bool warmed_up() const { return buffer_.size() >= config_.warmup; }
  std::size_t observed() const { return observed_; }
  const DpConfig& config() const { return config_; }
  const std::vector<double>& warmup_buffer() const { return buffer_; }

  // Rebuilds a tracker from persisted fields (checkpoint loading).
  static ClipState Restore(const DpConfig& config, std::vector<double> buffer,
                           double median, std::size_t observed) {
    ClipState s(config);
    if (buffer.size() > config.warmup)
      throw ParseError("clip warm-up buffer larger than configured warm-up");
    s.buffer_ = std::move(buffer);
    s.median_ = median;
    s.observed_ = observed;
    return s;
  }

  double clip_norm() const {
    if (config_.clip_mode == ClipMode::kFixed) return config_.fixed_clip;
    return config_.clip_fraction * median_;
  }

 private:
  DpConfig config_;
  std::vector<double> buffer_;
  double median_ = 0.0;
  std::size_t observed_ = 0;
};

// g' = g * min(1, C / ||g||) + N(0, (sigma C)^2 I). Under adaptive clipping
// the norm of g is fed to the tracker before C is read.
inline CutGradient ClipAndNoise(const CutGradient& g, ClipState& state,
                                double sigma, Rng& rng) {
  const double norm = g.values.norm();
  if (state.config().clip_mode == ClipMode::kAdaptiveMedian) state.Observe(norm);
  const double c = state.clip_norm();
  CutGradient out{g.values};
  if (norm > c) out.values *= (c > 0.0 ? c / norm : 0.0);
  const double stddev = sigma * c;
  if (stddev > 0.0)
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
      out.values(i) += rng.Normal(0.0, stddev);
  return out;
}

inline int FlipLabel(int label, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 0.5))
    throw ConfigError("flip probability must lie in [0, 0.5)");
  return rng.Bernoulli(p) ? 1 - label : label;
}

// Randomized-response budget: p = 1 / (e^eps + 1)  <=>  eps = ln((1-p)/p).
inline double LabelDpEpsilon(double p) {
  if (!(p > 0.0 && p < 0.5))
    throw ConfigError("label-DP epsilon needs p in (0, 0.5)");
  return std::log((1.0 - p) / p);
}

inline double FlipProbabilityForEpsilon(double epsilon) {
  return 1.0 / (std::exp(epsilon) + 1.0);
}

}  // namespace splitleak

#endif  // SPLITLEAK_DP_H_
