#include "progeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "progeval/error.hpp"

namespace progeval {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::kShapeMismatch, "auc: length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0;
  double neg = 0;
  double wins = 0;  // sum over positives of (#negatives below + half the tied negatives)
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double block_pos = 0;
    double block_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0) {
        ++block_pos;
      } else {
        ++block_neg;
      }
      ++j;
    }
    wins += block_pos * (neg + 0.5 * block_neg);
    pos += block_pos;
    neg += block_neg;
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorKind::kSingleClass, "auc needs both classes");
  return wins / (pos * neg);
}

double log_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw Error(ErrorKind::kShapeMismatch, "log_loss: length");
  if (probs.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    total -= labels[i] != 0 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(probs.size());
}

double brier(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw Error(ErrorKind::kShapeMismatch, "brier: length");
  if (probs.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double d = probs[i] - (labels[i] != 0 ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(probs.size());
}

}  // namespace progeval
