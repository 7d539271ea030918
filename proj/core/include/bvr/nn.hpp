#pragma once

#include <span>

#include "bvr/tensor.hpp"

namespace bvr {

// Defaults for layer hyperparameters the architecture leaves open.
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kDropoutRate = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

// ---------------------------------------------------------------------------
// Dense

struct DenseParams {
  Matrix weights;  // in x out
  RowVector bias;  // out

  Index in() const noexcept { return weights.rows(); }
  Index out() const noexcept { return weights.cols(); }

  static DenseParams zeros(Index in, Index out);
  /// Uniform He-style fan-in initialization: U(-sqrt(6/in), sqrt(6/in)), zero bias.
  static DenseParams he_uniform(Index in, Index out, Rng& rng);
};

/// output[i,j] = sum_k input[i,k] * weights[k,j] + bias[j]
Matrix dense_apply(const Matrix& input, const DenseParams& params);

struct DenseGrads {
  Matrix input;
  DenseParams params;
};

DenseGrads dense_backprop(const Matrix& input, const DenseParams& params, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Batch normalization

struct BatchNormParams {
  RowVector scale;
  RowVector shift;
  RowVector running_mean;
  RowVector running_var;
  double momentum = kBatchNormMomentum;
  double epsilon = kBatchNormEpsilon;

  Index width() const noexcept { return scale.size(); }

  /// scale 1, shift 0, running statistics of a standard normal.
  static BatchNormParams identity(Index width);
};

/// Values retained by batchnorm_apply for the backward pass.
struct BatchNormCache {
  Matrix normalized;
  RowVector inv_std;
  Mode mode = Mode::infer;
};

/// Train mode standardizes each column with batch statistics and folds them
/// into the running averages; infer mode uses the running averages.
/// Throws DataError for a train-mode batch with fewer than two rows.
Matrix batchnorm_apply(const Matrix& input, BatchNormParams& params, Mode mode,
                       BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Matrix input;
  RowVector scale;
  RowVector shift;
};

/// Exact gradient; in train mode this includes the terms flowing through the
/// batch mean and variance.
BatchNormGrads batchnorm_backprop(const Matrix& upstream, const BatchNormParams& params,
                                  const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// Leaky ReLU

Matrix leaky_relu(const Matrix& input, double slope = kLeakySlope);
Matrix leaky_relu_backprop(const Matrix& input, const Matrix& upstream, double slope = kLeakySlope);

// ---------------------------------------------------------------------------
// Dropout

struct DropoutResult {
  Matrix output;
  /// 0 for dropped units, 1/(1-rate) for survivors; all ones when inactive.
  Matrix mask;
};

/// Inverted dropout. `active` is true during training and during Monte Carlo
/// prediction; an inactive layer is the identity. Throws ConfigError unless
/// 0 <= rate < 1.
DropoutResult dropout_apply(const Matrix& input, double rate, bool active, Rng& rng);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(Index size)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)) {}
};

/// One bias-corrected Adam update in place. Throws NumericError on a
/// non-finite gradient (parameters are left untouched).
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

}  // namespace bvr
