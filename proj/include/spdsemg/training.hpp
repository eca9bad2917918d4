#pragma once

#include <vector>

#include "spdsemg/linalg.hpp"

namespace spdsemg {

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct SoftmaxLoss {
  double loss = 0.0;
  Vector grad;  // d loss / d logits
};

/// Cross-entropy of softmax(logits) against an integer label, computed with
/// the log-sum-exp shift.
SoftmaxLoss softmax_cross_entropy(const Vector& logits, int label);

/// Index of the largest logit; ties go to the lower index.
int argmax(const Vector& logits);

/// Dense linear classifier: logits = weight * features + bias.
struct LinearHead {
  Matrix weight;  // classes x features
  Vector bias;    // classes

  int classes() const { return static_cast<int>(weight.rows()); }
  int features() const { return static_cast<int>(weight.cols()); }
};

}  // namespace spdsemg
