#pragma once

// Evaluation protocol: block-wise folds, majority voting across fold
// models, balanced accuracy and the summed leaderboard score.

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "beetl/errors.hpp"
#include "beetl/spd.hpp"

namespace beetl::bench {

struct FoldSpec {
  std::vector<std::vector<int>> folds;  // block indices per fold, ascending

  int fold_of(int block) const {
    for (std::size_t f = 0; f < folds.size(); ++f)
      if (std::binary_search(folds[f].begin(), folds[f].end(), block)) return static_cast<int>(f);
    throw DataError("fold_of: block " + std::to_string(block) + " is in no fold");
  }
};

// Distinct blocks sorted in time and cut into k contiguous groups; the first
// (blocks mod k) groups take one extra block.
inline FoldSpec blockwise_folds(std::span<const int> block_indices, int k = 5) {
  if (k < 1) throw ConfigError("folds", "must be at least 1");
  const std::set<int> distinct(block_indices.begin(), block_indices.end());
  const auto n = static_cast<int>(distinct.size());
  if (n < k) {
    throw DataError("blockwise_folds: " + std::to_string(n) + " blocks cannot fill " + std::to_string(k) + " folds");
  }
  FoldSpec spec;
  auto it = distinct.begin();
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    std::vector<int>& fold = spec.folds.emplace_back();
    for (int i = 0; i < size; ++i) fold.push_back(*it++);
  }
  return spec;
}

// Per position, the most frequent class; ties go to the lowest class.
inline std::vector<int> majority_vote(std::span<const std::vector<int>> predictions) {
  if (predictions.empty()) throw DataError("majority_vote: no predictions");
  const std::size_t n = predictions.front().size();
  for (const auto& p : predictions)
    if (p.size() != n) throw ShapeError("majority_vote: prediction vectors differ in length");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, int> counts;
    for (const auto& p : predictions) ++counts[p[i]];
    int best = counts.begin()->first, votes = counts.begin()->second;
    for (const auto& [c, v] : counts) {
      if (v > votes) {
        best = c;
        votes = v;
      }
    }
    out[i] = best;
  }
  return out;
}

struct Confusion {
  std::vector<int> classes;  // sorted union of true and predicted labels
  Matrix counts;             // rows: true class, cols: predicted class

  int support(std::size_t row) const { return static_cast<int>(counts.row(static_cast<Index>(row)).sum()); }
};

inline Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("confusion_matrix: length mismatch");
  std::set<int> labels(y_true.begin(), y_true.end());
  labels.insert(y_pred.begin(), y_pred.end());
  Confusion c{{labels.begin(), labels.end()}, {}};
  const auto k = static_cast<Index>(c.classes.size());
  c.counts = Matrix::Zero(k, k);
  auto index = [&c](int label) {
    return static_cast<Index>(std::lower_bound(c.classes.begin(), c.classes.end(), label) - c.classes.begin());
  };
  for (std::size_t i = 0; i < y_true.size(); ++i) c.counts(index(y_true[i]), index(y_pred[i])) += 1.0;
  return c;
}

// Recall per class present in y_true, keyed by class.
inline std::map<int, double> per_class_recall(const Confusion& c) {
  std::map<int, double> out;
  for (std::size_t r = 0; r < c.classes.size(); ++r) {
    const int support = c.support(r);
    if (support > 0) out[c.classes[r]] = c.counts(static_cast<Index>(r), static_cast<Index>(r)) / support;
  }
  return out;
}

// Unweighted mean of per-class recall over the classes present in y_true.
inline double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("balanced_accuracy: length mismatch");
  if (y_true.empty()) throw DataError("balanced_accuracy: empty input");
  std::map<int, std::pair<int, int>> hits;  // class → (correct, support)
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    auto& [correct, support] = hits[y_true[i]];
    ++support;
    correct += y_true[i] == y_pred[i];
  }
  double sum = 0.0;
  for (const auto& [c, h] : hits) sum += static_cast<double>(h.first) / h.second;
  return sum / static_cast<double>(hits.size());
}

inline double leaderboard_score(std::span<const double> task_scores) {
  return std::accumulate(task_scores.begin(), task_scores.end(), 0.0);
}

}  // namespace beetl::bench
