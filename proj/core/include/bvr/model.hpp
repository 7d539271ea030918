#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "bvr/latent.hpp"
#include "bvr/layer_stack.hpp"
#include "bvr/normalization.hpp"

namespace bvr {

enum class LatentKind { meanfield, fullcov };

/// Step decay: lr(epoch) = initial * factor^floor(epoch / every).
struct LrSchedule {
  double initial = 1e-3;
  double factor = 0.5;
  int every = 300;

  double at(int epoch) const;
};

struct ModelConfig {
  Index input_dim = 90;
  Index latent_dim = 90;
  std::array<Index, 3> encoder_widths{128, 96, 64};
  std::array<Index, 3> decoder_widths{64, 96, 128};
  std::array<Index, 3> regressor_widths{64, 32, 16};
  LatentKind latent_kind = LatentKind::meanfield;
  LayerKind layer_kind = LayerKind::deterministic;
  double beta = 1.0;
  double gamma = 25.0;
  double dropout_rate = kDropoutRate;
  double leaky_slope = kLeakySlope;
  int epochs = 1500;
  int batch_size = 256;
  LrSchedule lr;
  std::uint64_t seed = 0;

  LogVarClamp latent_clamp;
  double weight_prior_std = 1.0;
  bool train_prior = false;
  double weight_log_var_init = kWeightLogVarInit;
  /// When set, beta also multiplies the (1/N_train-scaled) weight KL.
  bool beta_scales_weight_kl = false;
  /// Early stopping on validation total loss; 0 disables it.
  int early_stop_patience = 0;

  /// Width of the encoder output: 2J (mean-field) or J + J(J+1)/2 (full covariance).
  Index posterior_width() const noexcept;
  /// Throws ConfigError on any invalid field.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Strict: unknown keys raise ConfigError. Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& c);

std::string to_string(LatentKind k);
std::string to_string(LayerKind k);

struct JointLossBreakdown {
  double reconstruction_mse = 0.0;
  double kl = 0.0;
  double regression_mse = 0.0;
  double total = 0.0;
};

/// total = reconstruction_mse + beta * kl + gamma * regression_mse, where the
/// reconstruction term averages over rows and features, kl averages the
/// per-sample KL over rows, and the regression term averages over rows.
JointLossBreakdown joint_loss(const Matrix& x, const Matrix& x_hat, const Vector& kl_per_sample, const Vector& y,
                              const Vector& y_hat, double beta, double gamma);

struct ForwardOptions {
  Mode mode = Mode::infer;
  bool dropout = false;
  bool sample_weights = false;
  /// Draw z from the posterior; otherwise z is the posterior mean.
  bool sample_latent = false;
  /// Replay every stored mask and noise draw from the previous pass.
  bool replay = false;

  static ForwardOptions training() { return {Mode::train, true, true, true, false}; }
  static ForwardOptions inference() { return {}; }
  /// Running batch-norm statistics with every stochastic path live.
  static ForwardOptions monte_carlo() { return {Mode::infer, true, true, true, false}; }
};

struct ForwardResult {
  Matrix reconstruction;
  /// Raw encoder output (posterior parameters), N x posterior_width.
  Matrix posterior;
  Matrix latent_mean;
  Matrix z;
  Vector prediction;
  Vector kl_per_sample;
};

/// Encoder -> latent head -> {decoder, regressor}. Values are copyable; a copy
/// carries parameters, running statistics and cached activations.
class Model {
 public:
  /// Builds and initializes from `config.seed`. Throws ConfigError.
  static Model build(const ModelConfig& config);

  ForwardResult forward(const Matrix& x, const ForwardOptions& opts, Rng& rng);

  /// Forward pass in `opts`, joint loss, and gradient accumulation for every
  /// parameter. When the layers are probabilistic, `weight_kl_scale` times the
  /// weight KL is added to the objective (not to the returned breakdown).
  JointLossBreakdown accumulate_gradients(const Matrix& x, const Vector& y, const ForwardOptions& opts, Rng& rng,
                                          double weight_kl_scale);

  /// Deterministic point prediction: running statistics, no dropout, z = posterior mean.
  Vector predict(const Matrix& x);
  /// Posterior means (N x latent_dim).
  Matrix embed(const Matrix& x);

  void zero_grads();
  std::vector<ParamBlock> parameters();
  std::vector<StateTensor> state();
  double weight_kl() const;
  void sync_priors();

  const ModelConfig& config() const noexcept { return config_; }
  ModelConfig& mutable_config() noexcept { return config_; }
  bool trained() const noexcept { return trained_; }
  void set_trained(bool t) noexcept { trained_ = t; }
  const std::optional<NormStats>& normalization() const noexcept { return normalization_; }
  void set_normalization(NormStats stats) { normalization_ = std::move(stats); }

  LayerStack& encoder() noexcept { return encoder_; }
  LayerStack& decoder() noexcept { return decoder_; }
  LayerStack& regressor() noexcept { return regressor_; }

 private:
  Model() = default;

  PassOptions pass_options(const ForwardOptions& opts) const;
  /// Backpropagates dLoss/dz plus the scaled KL gradient into the encoder.
  void backward_latent(const Matrix& grad_z, double kl_scale);

  ModelConfig config_;
  LayerStack encoder_;
  LayerStack decoder_;
  LayerStack regressor_;
  bool trained_ = false;
  std::optional<NormStats> normalization_;

  // Cached by forward().
  Matrix posterior_;
  Matrix noise_;
  bool sampled_ = false;
};

}  // namespace bvr
