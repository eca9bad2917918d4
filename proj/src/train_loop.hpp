#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spdsemg/error.hpp"
#include "spdsemg/random.hpp"
#include "spdsemg/training.hpp"

namespace spdsemg::detail {

template <typename Model>
struct LoopResult {
  Model best;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
};

template <typename Model, typename Sample, typename InputOf>
double model_accuracy(const Model& model, std::span<const Sample> data, InputOf input_of) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto& s : data) {
    if (argmax(model.forward(input_of(s))) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct LoopSettings {
  int epochs = 1;
  int batch_size = 0;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  const char* who = "train";
};

// Softmax cross-entropy SGD. Validation accuracy is taken on the parameters
// each epoch starts from; the best snapshot (first on ties) is kept, and the
// parameters after the last update get one final evaluation.
template <typename Model, typename Sample, typename InputOf>
LoopResult<Model> run_training(Model model, std::span<const Sample> train,
                               std::span<const Sample> validation, const LoopSettings& settings,
                               InputOf input_of) {
  Pcg32 shuffler(settings.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = settings.batch_size == 0
                                ? train.size()
                                : std::min(train.size(), static_cast<std::size_t>(settings.batch_size));

  LoopResult<Model> result;
  result.best = model;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const double val_acc = model_accuracy(model, validation, input_of);
    if (val_acc > result.best_val_accuracy) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.best = model;
    }
    if (batch < train.size()) shuffler.shuffle(order);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t stop = std::min(train.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      auto grads = model.zero_gradients();
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& sample = train[order[k]];
        Vector logits;
        loss_sum += model.accumulate_gradients(input_of(sample), sample.label, scale, grads, &logits);
        if (argmax(logits) == sample.label) ++correct;
      }
      if (!std::isfinite(loss_sum)) {
        fail(ErrorCode::TrainingDiverged,
             std::string(settings.who) + ": non-finite loss at epoch " + std::to_string(epoch));
      }
      model.apply_gradients(grads, settings.learning_rate);
    }
    const auto n = static_cast<double>(train.size());
    result.history.push_back(
        EpochMetrics{epoch, loss_sum / n, static_cast<double>(correct) / n, val_acc});
  }
  const double final_val = model_accuracy(model, validation, input_of);
  if (final_val > result.best_val_accuracy) {
    result.best_val_accuracy = final_val;
    result.best_epoch = settings.epochs;
    result.best = model;
  }
  return result;
}

}  // namespace spdsemg::detail
