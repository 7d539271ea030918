#pragma once

#include "bvr/tensor.hpp"

namespace bvr {

/// Clamp range for weight log-variances. The floor is low enough that a
/// layer at the floor is indistinguishable from its mean weights at double
/// precision (std ~1.4e-11).
inline constexpr double kWeightLogVarMin = -50.0;
inline constexpr double kWeightLogVarMax = 10.0;
inline constexpr double kWeightLogVarInit = -6.0;

/// Factorized Gaussian posterior over a dense layer's weights and biases,
/// with an isotropic zero-mean Gaussian prior of standard deviation prior_std.
struct VarDenseParams {
  Matrix weight_mean;
  Matrix weight_log_var;
  RowVector bias_mean;
  RowVector bias_log_var;
  double prior_std = 1.0;

  Index in() const noexcept { return weight_mean.rows(); }
  Index out() const noexcept { return weight_mean.cols(); }

  /// He-uniform means, zero bias means, log-variances at `log_var`.
  static VarDenseParams init(Index in, Index out, Rng& rng, double log_var = kWeightLogVarInit,
                             double prior_std = 1.0);
};

enum class WeightMode { sample, mean };

/// Standard-normal draws for one forward pass, shared across the batch.
struct VarDenseNoise {
  Matrix weight;
  RowVector bias;

  static VarDenseNoise zeros(Index in, Index out);
  static VarDenseNoise draw(Index in, Index out, Rng& rng);
};

/// Sample mode uses W = weight_mean + exp(0.5 * weight_log_var) * noise (same
/// for the bias); mean mode ignores the noise and uses the means.
Matrix vardense_apply(const Matrix& input, const VarDenseParams& params, const VarDenseNoise& noise,
                      WeightMode mode);

/// Sum over every weight and bias of KL(N(m, s^2) || N(0, prior_std^2)).
double vardense_kl(const VarDenseParams& params);

struct VarDenseGrads {
  Matrix input;
  Matrix weight_mean;
  Matrix weight_log_var;
  RowVector bias_mean;
  RowVector bias_log_var;
  /// d/d log(prior_std); only meaningful for the KL gradient.
  double log_prior_std = 0.0;
};

/// Gradient of a downstream loss through the reparameterized weight draw.
/// `noise` must be the draw used in the forward pass.
VarDenseGrads vardense_backprop(const Matrix& input, const VarDenseParams& params, const VarDenseNoise& noise,
                                WeightMode mode, const Matrix& upstream);

/// Gradient of vardense_kl (input gradient left empty).
VarDenseGrads vardense_kl_grad(const VarDenseParams& params);

}  // namespace bvr
