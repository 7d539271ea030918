#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/tensor.hpp"

namespace bvr {

class Model;

/// Summary of T stochastic predictions for one input.
struct UncertainPrediction {
  double mean = 0.0;
  /// Unbiased (divisor T-1) sample standard deviation.
  double std = 0.0;
  std::vector<double> samples;
  Index sample_count = 0;

  /// Throws ConfigError when fewer than two samples are given.
  static UncertainPrediction from_samples(std::vector<double> samples);
};

enum class Verdict { accept, simulate };

struct GateDecision {
  Verdict verdict = Verdict::simulate;
  double threshold_used = 0.0;
  double std_observed = 0.0;
};

inline constexpr int kDefaultMcSamples = 1000;

/// T stochastic passes over `inputs` (normalized features, one row per
/// input). Dropout is live for every model, weights are resampled for
/// probabilistic models, and z is drawn from the posterior; batch
/// normalization always uses running statistics. Pass t draws from
/// derive_seed(seed, t) and passes are reduced in order, so the result does
/// not depend on `threads`. Throws ConfigError for an untrained model or T < 2.
std::vector<UncertainPrediction> mc_predict(Model& model, const Matrix& inputs, int samples, std::uint64_t seed,
                                            int threads = 1);
UncertainPrediction mc_predict(Model& model, std::span<const double> input, int samples, std::uint64_t seed);

/// accept iff pred.std <= threshold (the boundary accepts).
GateDecision gate(const UncertainPrediction& pred, double threshold);

/// Mean squared error. Throws ShapeError on length mismatch or empty input.
double mse(const Vector& y, const Vector& y_hat);
/// 1 - SS_res / SS_tot. Throws DataError for constant y, ShapeError for < 2 points.
double r2_score(const Vector& y, const Vector& y_hat);

struct EvaluationRow {
  double truth = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

/// Holdout metrics at T Monte Carlo samples, in normalized target units.
struct EvaluationReport {
  std::string dataset;
  std::string model;
  std::string split = "holdout";
  int mc_samples = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double r2 = 0.0;
  double mean_std = 0.0;
  std::vector<EvaluationRow> rows;
};

/// Runs mc_predict on normalized `inputs` and scores the MC means against
/// normalized `truths`.
EvaluationReport evaluate_model(Model& model, const Matrix& inputs, const Vector& truths, int mc_samples,
                                std::uint64_t seed, int threads = 1);

nlohmann::json to_json(const EvaluationReport& report);

}  // namespace bvr
