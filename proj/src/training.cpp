#include "spdsemg/training.hpp"

#include <cmath>

#include "spdsemg/error.hpp"

namespace spdsemg {

SoftmaxLoss softmax_cross_entropy(const Vector& logits, int label) {
  require(label >= 0 && label < logits.size(), ErrorCode::InvalidInput,
          "softmax_cross_entropy: label out of range");
  const double shift = logits.maxCoeff();
  Vector p = (logits.array() - shift).exp().matrix();
  const double z = p.sum();
  p /= z;
  SoftmaxLoss out;
  out.loss = -(logits(label) - shift - std::log(z));
  out.grad = p;
  out.grad(label) -= 1.0;
  return out;
}

int argmax(const Vector& logits) {
  require(logits.size() > 0, ErrorCode::InvalidInput, "argmax: empty vector");
  int best = 0;
  for (int i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return best;
}

}  // namespace spdsemg
