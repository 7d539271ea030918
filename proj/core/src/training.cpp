#include "bvr/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "bvr/error.hpp"

namespace bvr {
namespace {

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

Vector gather(const Vector& v, std::span<const Index> rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = v[rows[i]];
  return out;
}

void accumulate(JointLossBreakdown& sum, const JointLossBreakdown& b, double weight) {
  sum.reconstruction_mse += weight * b.reconstruction_mse;
  sum.kl += weight * b.kl;
  sum.regression_mse += weight * b.regression_mse;
  sum.total += weight * b.total;
}

}  // namespace

JointLossBreakdown evaluate_loss(Model& model, const Matrix& x, const Vector& y) {
  Rng unused(0);
  const ForwardResult r = model.forward(x, ForwardOptions::inference(), unused);
  const auto& c = model.config();
  return joint_loss(x, r.reconstruction, r.kl_per_sample, y, r.prediction, c.beta, c.gamma);
}

TrainingHistory train(Model& model, const Matrix& x_train, const Vector& y_train, const Matrix& x_val,
                      const Vector& y_val, const EpochCallback& on_epoch) {
  const ModelConfig& cfg = model.config();
  cfg.validate();
  expect_shape(x_train, y_train.size(), cfg.input_dim, "training features");
  const bool has_val = x_val.rows() > 0;
  if (has_val) expect_shape(x_val, y_val.size(), cfg.input_dim, "validation features");

  TrainingHistory history;
  if (cfg.epochs == 0) return history;
  const Index n = x_train.rows();
  if (n < 2) throw DataError("training needs at least two rows");

  std::vector<ParamBlock> blocks = model.parameters();
  std::vector<AdamState> adam;
  adam.reserve(blocks.size());
  for (const auto& b : blocks) adam.emplace_back(static_cast<Index>(b.values.size()));

  double weight_kl_scale = 0.0;
  if (cfg.layer_kind == LayerKind::probabilistic) {
    weight_kl_scale = (cfg.beta_scales_weight_kl ? cfg.beta : 1.0) / static_cast<double>(n);
  }

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::min<Index>(cfg.batch_size, n);

  std::optional<Model> best;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    const double lr = cfg.lr.at(epoch);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    Index begin = 0;
    int batch_index = 0;
    while (begin < n) {
      Index end = std::min(begin + batch, n);
      if (n - end == 1) end = n;
      const std::span<const Index> rows(order.data() + begin, static_cast<std::size_t>(end - begin));
      const Matrix xb = gather_rows(x_train, rows);
      const Vector yb = gather(y_train, rows);

      model.zero_grads();
      const std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      JointLossBreakdown loss;
      try {
        loss = model.accumulate_gradients(xb, yb, ForwardOptions::training(), rng, weight_kl_scale);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      if (!std::isfinite(loss.total)) throw NumericError("non-finite loss at " + where);
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        try {
          adam_step(blocks[k].values, blocks[k].grads, adam[k], lr);
        } catch (const NumericError&) {
          throw NumericError("non-finite gradient in " + blocks[k].name + " at " + where);
        }
      }
      model.sync_priors();
      accumulate(rec.train, loss, static_cast<double>(end - begin) / static_cast<double>(n));
      begin = end;
      ++batch_index;
    }

    if (has_val) {
      rec.validation = evaluate_loss(model, x_val, y_val);
      rec.has_validation = true;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(rec);
    history.best_epoch = epoch;
    if (on_epoch) on_epoch(rec);

    if (cfg.early_stop_patience > 0 && has_val) {
      if (rec.validation.total < best_loss) {
        best_loss = rec.validation.total;
        best = model;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        history.early_stopped = true;
        break;
      }
    }
  }

  if (history.early_stopped && best) {
    history.best_epoch = history.epochs[static_cast<std::size_t>(history.epochs.size()) - 1].epoch - since_best;
    model = std::move(*best);
  }
  model.set_trained(true);
  return history;
}

TrainingHistory train(Model& model, const LabeledDataset& data, const EpochCallback& on_epoch) {
  const Matrix x_train = data.stats.normalize(data.features_of(data.train_indices));
  const Vector y_train = data.stats.normalize_targets(data.targets_of(data.train_indices));
  Matrix x_val(0, data.features.cols());
  Vector y_val(0);
  if (!data.holdout_indices.empty()) {
    x_val = data.stats.normalize(data.features_of(data.holdout_indices));
    y_val = data.stats.normalize_targets(data.targets_of(data.holdout_indices));
  }
  TrainingHistory h = train(model, x_train, y_train, x_val, y_val, on_epoch);
  model.set_normalization(data.stats);
  return h;
}

}  // namespace bvr
