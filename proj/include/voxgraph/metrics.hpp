#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "voxgraph/error.hpp"

namespace voxgraph {

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ContractError("metric inputs differ in length");
  if (a == 0) throw ContractError("metric inputs are empty");
}

}  // namespace detail

/// Fraction of positions where pred == label.
inline double accuracy(std::span<const int> preds, std::span<const int> labels) {
  detail::check_lengths(preds.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return double(hits) / double(preds.size());
}

/// F1 of the positive class (label 1); 0 when precision + recall is 0.
inline double f1(std::span<const int> preds, std::span<const int> labels) {
  detail::check_lengths(preds.size(), labels.size());
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += preds[i] == 1 && labels[i] == 1;
    fp += preds[i] == 1 && labels[i] != 1;
    fn += preds[i] != 1 && labels[i] == 1;
  }
  const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

/// Mann-Whitney AUROC: P(score of a random positive > score of a random
/// negative), ties counted as one half. Uses midranks, O(n log n).
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_lengths(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ContractError("auroc needs both classes");
  const double u = pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0;
  return u / (double(n_pos) * double(n_neg));
}

/// Area under the empirical ROC curve by the trapezoid rule, sweeping the
/// threshold down through the distinct scores.
inline double roc_trapezoid(std::span<const double> scores, std::span<const int> labels) {
  detail::check_lengths(scores.size(), labels.size());
  const std::size_t n = scores.size();
  const auto n_pos = std::size_t(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ContractError("roc needs both classes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0, fpr = 0, tpr = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double nf = double(fp) / double(n_neg), nt = double(tp) / double(n_pos);
    area += (nf - fpr) * (nt + tpr) / 2.0;
    fpr = nf;
    tpr = nt;
    i = j;
  }
  return area;
}

/// Threshold probabilities at 0.5.
inline std::vector<int> threshold_predictions(std::span<const double> scores) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= 0.5 ? 1 : 0;
  return out;
}

}  // namespace voxgraph
