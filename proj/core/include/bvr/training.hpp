#pragma once

#include <functional>
#include <vector>

#include "bvr/dataset.hpp"
#include "bvr/model.hpp"

namespace bvr {

struct EpochRecord {
  int epoch = 0;
  JointLossBreakdown train;
  JointLossBreakdown validation;
  bool has_validation = false;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
  /// Epoch whose parameters were kept when early stopping (last epoch otherwise).
  int best_epoch = -1;

  std::size_t size() const noexcept { return epochs.size(); }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled minibatch Adam on the joint loss over already-normalized data.
/// A trailing minibatch of one row is merged into the previous one so batch
/// statistics stay defined. Validation losses use the deterministic inference
/// pass. Throws NumericError naming the epoch and batch on a non-finite loss.
TrainingHistory train(Model& model, const Matrix& x_train, const Vector& y_train, const Matrix& x_val,
                      const Vector& y_val, const EpochCallback& on_epoch = {});

/// Normalizes the train/holdout split of `data` with its statistics, trains,
/// and stores the statistics in the model.
TrainingHistory train(Model& model, const LabeledDataset& data, const EpochCallback& on_epoch = {});

/// Loss of the deterministic inference pass over normalized data.
JointLossBreakdown evaluate_loss(Model& model, const Matrix& x, const Vector& y);

}  // namespace bvr
