#pragma once

#include <span>

namespace progeval {

/// Probability that a random positive outranks a random negative; ties
/// count one half. Throws Error(kSingleClass) when a class is missing.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Mean binary cross-entropy with probabilities clipped to [1e-12, 1 - 1e-12].
double log_loss(std::span<const double> probs, std::span<const int> labels);
double brier(std::span<const double> probs, std::span<const int> labels);

}  // namespace progeval
