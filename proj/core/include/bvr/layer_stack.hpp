#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "bvr/bayes_dense.hpp"
#include "bvr/nn.hpp"

namespace bvr {

/// Which stochastic paths are live for one forward pass.
struct PassOptions {
  Mode mode = Mode::infer;
  bool dropout = false;
  bool sample_weights = false;
  /// Reuse the dropout masks and weight noise of the previous pass instead of
  /// drawing new ones (finite-difference checks).
  bool replay = false;
};

struct DenseLayer {
  DenseParams params;
  DenseParams grads;
  Matrix input;
};

struct VarDenseLayer {
  VarDenseParams params;
  VarDenseGrads grads;
  /// log(prior_std); trained only when `train_prior` is set.
  RowVector log_prior_std = RowVector::Zero(1);
  bool train_prior = false;
  Matrix input;
  VarDenseNoise noise;
  WeightMode last_mode = WeightMode::mean;
};

struct BatchNormLayer {
  BatchNormParams params;
  RowVector grad_scale;
  RowVector grad_shift;
  BatchNormCache cache;
};

struct LeakyReluLayer {
  double slope = kLeakySlope;
  Matrix input;
};

struct DropoutLayer {
  double rate = kDropoutRate;
  Matrix mask;
};

using Layer = std::variant<DenseLayer, VarDenseLayer, BatchNormLayer, LeakyReluLayer, DropoutLayer>;

/// A trainable tensor with its gradient accumulator.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<double> grads;
};

/// Any tensor that belongs in a checkpoint (parameters and running statistics).
struct StateTensor {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  std::span<double> values;
};

enum class LayerKind { deterministic, probabilistic };

struct StackSpec {
  Index input_dim = 0;
  std::vector<Index> hidden;
  Index output_dim = 0;
  LayerKind kind = LayerKind::deterministic;
  double dropout_rate = kDropoutRate;
  double leaky_slope = kLeakySlope;
  double prior_std = 1.0;
  bool train_prior = false;
  double weight_log_var_init = kWeightLogVarInit;
};

/// Sequential network. Forward passes cache what the backward pass needs;
/// backward accumulates into each layer's gradient buffers.
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(std::string name) : name_(std::move(name)) {}

  /// Each hidden width becomes dense -> batch norm -> leaky ReLU -> dropout;
  /// the output layer is a bare dense map.
  static LayerStack mlp(std::string name, const StackSpec& spec, Rng& rng);

  void push(Layer layer) { layers_.push_back(std::move(layer)); }

  Matrix forward(const Matrix& input, const PassOptions& opts, Rng& rng);
  /// Returns the gradient w.r.t. the input of the last forward pass.
  Matrix backward(const Matrix& upstream);

  void zero_grads();
  /// Spans stay valid for the lifetime of this stack (zero_grads clears in place).
  std::vector<ParamBlock> parameters();
  std::vector<StateTensor> state();

  /// Sum of weight-posterior KLs over probabilistic layers (0 if none).
  double weight_kl() const;
  /// Adds scale * d(weight_kl) to the gradient buffers.
  void accumulate_weight_kl_grad(double scale);
  /// Copies trained prior scales into the layer parameters after an update.
  void sync_priors();

  /// Sets every probabilistic layer's log-variances to `log_var`.
  void set_weight_log_var(double log_var);

  Index input_dim() const;
  Index output_dim() const;

  const std::string& name() const noexcept { return name_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

 private:
  std::string name_;
  std::vector<Layer> layers_;
};

}  // namespace bvr
