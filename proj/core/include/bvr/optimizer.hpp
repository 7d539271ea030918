#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/bounds.hpp"
#include "bvr/field_proxy.hpp"
#include "bvr/uncertainty.hpp"

namespace bvr {

class Model;

enum class Direction { maximize, minimize };

/// DE/rand/1/bin hyperparameters.
struct DeParams {
  int population_size = 60;
  double weight = 0.7;     // F
  double crossover = 0.9;  // CR

  /// Throws ConfigError unless population >= 4, 0 < F < 2 and 0 < CR <= 1.
  void validate() const;
};

struct Population {
  Matrix members;  // one candidate per row
  Vector values;
};

/// Uniform random population inside the box.
Matrix random_population(int size, const Bounds& bounds, Rng& rng);

/// Mutation v = a + F (b - c) with a, b, c distinct and different from the
/// target, binomial crossover forcing at least one mutated coordinate, then
/// clamping to the box. Returns one trial per population member.
Matrix de_propose(const Matrix& members, const DeParams& params, const Bounds& bounds, Rng& rng);

/// Greedy one-to-one replacement; ties keep the trial.
void de_select(Population& pop, const Matrix& trials, const Vector& trial_values, Direction dir);

using BatchObjective = std::function<Vector(const Matrix&)>;

/// de_propose, evaluate the trials, de_select.
Population de_step(const Population& pop, const DeParams& params, const Bounds& bounds, Direction dir, Rng& rng,
                   const BatchObjective& evaluate);

// ---------------------------------------------------------------------------
// Uncertainty-gated evaluation

enum class GateKind {
  /// Accept the surrogate iff predictive std <= value (standardized target units).
  absolute,
  /// Simulate the ceil(value * n) most uncertain candidates of each batch.
  quantile,
};

struct GateConfig {
  GateKind kind = GateKind::quantile;
  double value = 0.3;
};

enum class EvalSource { surrogate, simulator };

std::string to_string(EvalSource s);

struct GatedBatch {
  Vector values;
  std::vector<EvalSource> sources;
  Vector stds;  // standardized target units
  double threshold_used = 0.0;
  std::size_t simulator_calls = 0;
  std::size_t surrogate_accepts = 0;
};

using Simulator = std::function<double(std::span<const double>)>;

/// Runs MC prediction for every candidate (raw decision units), gates each one
/// on its standardized predictive std and calls `simulator` for the rejected
/// ones. Accepted surrogate means are denormalized to objective units.
GatedBatch gated_evaluate(const Matrix& candidates, Model& surrogate, const GateConfig& gate, int mc_samples,
                          std::uint64_t seed, const Simulator& simulator);

// ---------------------------------------------------------------------------
// Field optimization

struct OptimizerConfig {
  DeParams de;
  int generations = 50;
  GateConfig gate;
  int mc_samples = 100;
  std::uint64_t seed = 0;
  /// Relative noise of the simulator during optimization.
  double simulator_noise = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
/// Strict: unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, OptimizerConfig& c);

struct GenerationStats {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
  std::size_t simulator_calls = 0;    // cumulative
  std::size_t surrogate_accepts = 0;  // cumulative
};

struct EvaluationRecord {
  int generation = 0;
  std::vector<double> decision;
  double value = 0.0;
  EvalSource source = EvalSource::simulator;
};

struct OptRunStats {
  DecisionVector best_decision;
  /// Always a simulator value.
  double best_objective = 0.0;
  std::size_t simulator_calls = 0;
  std::size_t surrogate_accepts = 0;
  std::size_t total_evaluations = 0;
  std::vector<GenerationStats> generations;
  std::vector<EvaluationRecord> trace;
};

/// Maximizes the objective with DE. The initial population is simulated;
/// later generations go through gated_evaluate when `surrogate` is non-null
/// (every trial is simulated otherwise). The reported best is re-simulated if
/// its value came from the surrogate, and is the best simulator value seen.
OptRunStats optimize(const ProxyField& field, ObjectiveKind objective, const EconomicParams& econ, Model* surrogate,
                     const OptimizerConfig& config);

nlohmann::json run_report_json(const OptRunStats& stats, const OptimizerConfig& config, bool gated);
void write_trace_csv(const OptRunStats& stats, const std::string& path);

}  // namespace bvr
