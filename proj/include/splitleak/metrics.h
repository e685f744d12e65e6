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

#ifndef SPLITLEAK_METRICS_H_
#define SPLITLEAK_METRICS_H_

#include <algorithm>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "splitleak/common.h"

namespace splitleak {

// Area under the ROC curve as the Mann-Whitney statistic
// P(score+ > score-) + 0.5 P(tie), with midranks for tied scores.
template <typename Score = double, typename Label = int>
double Auc(std::span<const Score> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share the midrank
    double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw NumericError("auc is undefined when only one class is present");
  double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline double Auc(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  return Auc<double, int>(std::span<const double>(scores),
                          std::span<const int>(labels));
}

// One-vs-rest counts for a single class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }

  double F1() const {
    std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0
                      : 2.0 * static_cast<double>(tp) /
                            static_cast<double>(denom);
  }
};

inline ConfusionCounts CountClass(std::span<const int> predictions,
                                  std::span<const int> truths, int cls) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    bool p = predictions[i] == cls, t = truths[i] == cls;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

enum class F1Averaging {
  kBinaryPositive,  // F1 of class 1
  kMacro,           // unweighted mean over the evaluated classes
};

// Binary features (cardinality 2) report positive-class F1; wider features
// are macro-averaged.
inline F1Averaging AveragingFor(int cardinality) {
  return cardinality == 2 ? F1Averaging::kBinaryPositive : F1Averaging::kMacro;
}

// Macro averaging runs over every class that occurs in the truths or the
// predictions; a class that is predicted but never true scores 0.
inline double F1(std::span<const int> predictions, std::span<const int> truths,
                 F1Averaging averaging) {
  if (predictions.size() != truths.size())
    throw DimensionError("f1: predictions and truths differ in length");
  if (predictions.empty()) throw NumericError("f1 of an empty sample");
  if (averaging == F1Averaging::kBinaryPositive)
    return CountClass(predictions, truths, 1).F1();
  std::set<int> classes(truths.begin(), truths.end());
  classes.insert(predictions.begin(), predictions.end());
  double sum = 0.0;
  for (int c : classes) sum += CountClass(predictions, truths, c).F1();
  return sum / static_cast<double>(classes.size());
}

inline double F1(const std::vector<int>& predictions,
                 const std::vector<int>& truths, F1Averaging averaging) {
  return F1(std::span<const int>(predictions), std::span<const int>(truths),
            averaging);
}

inline double Accuracy(std::span<const int> predictions,
                       std::span<const int> truths) {
  if (predictions.size() != truths.size())
    throw DimensionError("accuracy: predictions and truths differ in length");
  if (predictions.empty()) throw NumericError("accuracy of an empty sample");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

inline double Accuracy(const std::vector<int>& predictions,
                       const std::vector<int>& truths) {
  return Accuracy(std::span<const int>(predictions),
                  std::span<const int>(truths));
}

}  // namespace splitleak

#endif  // SPLITLEAK_METRICS_H_
