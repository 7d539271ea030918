#include "bvr/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "bvr/dataset.hpp"
#include "bvr/error.hpp"
#include "bvr/model.hpp"

namespace bvr {
namespace {

constexpr int kReportFormatVersion = 1;

bool better_or_equal(double trial, double parent, Direction dir) {
  return dir == Direction::maximize ? trial >= parent : trial <= parent;
}

nlohmann::json threshold_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace

void DeParams::validate() const {
  if (population_size < 4) throw ConfigError("DE population_size must be >= 4");
  if (!(weight > 0.0 && weight < 2.0)) throw ConfigError("DE weight F must be in (0, 2)");
  if (!(crossover > 0.0 && crossover <= 1.0)) throw ConfigError("DE crossover rate must be in (0, 1]");
}

Matrix random_population(int size, const Bounds& bounds, Rng& rng) {
  Matrix m(size, bounds.dim());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(bounds.lower[j], bounds.upper[j]);
  }
  return m;
}

Matrix de_propose(const Matrix& members, const DeParams& params, const Bounds& bounds, Rng& rng) {
  const Index n = members.rows();
  const Index dim = members.cols();
  if (n < 4) throw ConfigError("de_propose: population must have at least 4 members");
  if (dim != bounds.dim()) throw ShapeError("de_propose: bounds dimension mismatch");
  if (!(params.weight >= 0.0 && params.weight < 2.0)) throw ConfigError("de_propose: F must be in [0, 2)");
  if (!(params.crossover >= 0.0 && params.crossover <= 1.0)) throw ConfigError("de_propose: CR must be in [0, 1]");

  Matrix trials(n, dim);
  const auto nn = static_cast<std::size_t>(n);
  for (Index i = 0; i < n; ++i) {
    Index a = 0;
    Index b = 0;
    Index c = 0;
    do a = static_cast<Index>(rng.index(nn)); while (a == i);
    do b = static_cast<Index>(rng.index(nn)); while (b == i || b == a);
    do c = static_cast<Index>(rng.index(nn)); while (c == i || c == a || c == b);
    const auto forced = static_cast<Index>(rng.index(static_cast<std::size_t>(dim)));
    for (Index j = 0; j < dim; ++j) {
      const bool take = j == forced || rng.uniform() < params.crossover;
      trials(i, j) = take ? members(a, j) + params.weight * (members(b, j) - members(c, j)) : members(i, j);
    }
    bounds.clamp(trials.row(i).data());
  }
  return trials;
}

void de_select(Population& pop, const Matrix& trials, const Vector& trial_values, Direction dir) {
  if (trials.rows() != pop.members.rows() || trial_values.size() != pop.values.size()) {
    throw ShapeError("de_select: trial batch does not match population");
  }
  for (Index i = 0; i < trials.rows(); ++i) {
    if (better_or_equal(trial_values[i], pop.values[i], dir)) {
      pop.members.row(i) = trials.row(i);
      pop.values[i] = trial_values[i];
    }
  }
}

Population de_step(const Population& pop, const DeParams& params, const Bounds& bounds, Direction dir, Rng& rng,
                   const BatchObjective& evaluate) {
  const Matrix trials = de_propose(pop.members, params, bounds, rng);
  const Vector values = evaluate(trials);
  Population next = pop;
  de_select(next, trials, values, dir);
  return next;
}

std::string to_string(EvalSource s) { return s == EvalSource::surrogate ? "surrogate" : "simulator"; }

GatedBatch gated_evaluate(const Matrix& candidates, Model& surrogate, const GateConfig& gate_config, int mc_samples,
                          std::uint64_t seed, const Simulator& simulator) {
  if (!surrogate.normalization()) throw ConfigError("gated_evaluate: surrogate has no normalization statistics");
  const NormStats& norm = *surrogate.normalization();
  const Index n = candidates.rows();
  const std::vector<UncertainPrediction> preds = mc_predict(surrogate, norm.normalize(candidates), mc_samples, seed);

  GatedBatch out;
  out.values.resize(n);
  out.stds.resize(n);
  out.sources.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.stds[i] = preds[static_cast<std::size_t>(i)].std;

  if (gate_config.kind == GateKind::absolute) {
    out.threshold_used = gate_config.value;
  } else {
    const auto k = static_cast<Index>(std::ceil(std::clamp(gate_config.value, 0.0, 1.0) * static_cast<double>(n)));
    if (k == 0) {
      out.threshold_used = std::numeric_limits<double>::infinity();
    } else if (k >= n) {
      out.threshold_used = -std::numeric_limits<double>::infinity();
    } else {
      std::vector<double> sorted(out.stds.data(), out.stds.data() + n);
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      out.threshold_used = sorted[static_cast<std::size_t>(k)];
    }
  }

  for (Index i = 0; i < n; ++i) {
    const auto& p = preds[static_cast<std::size_t>(i)];
    const bool accept = out.threshold_used >= 0.0 && gate(p, out.threshold_used).verdict == Verdict::accept;
    if (accept) {
      out.values[i] = norm.denormalize_target(p.mean);
      out.sources[static_cast<std::size_t>(i)] = EvalSource::surrogate;
      ++out.surrogate_accepts;
    } else {
      out.values[i] = simulator(std::span<const double>(candidates.row(i).data(), static_cast<std::size_t>(candidates.cols())));
      out.sources[static_cast<std::size_t>(i)] = EvalSource::simulator;
      ++out.simulator_calls;
    }
  }
  return out;
}

void OptimizerConfig::validate() const {
  de.validate();
  if (generations < 0) throw ConfigError("optimizer generations must be >= 0");
  if (mc_samples < 2) throw ConfigError("optimizer mc_samples must be >= 2");
  if (gate.kind == GateKind::absolute && !(gate.value >= 0.0)) throw ConfigError("gate threshold must be >= 0");
  if (gate.kind == GateKind::quantile && !(gate.value >= 0.0 && gate.value <= 1.0)) {
    throw ConfigError("gate quantile must be in [0, 1]");
  }
  if (simulator_noise < 0.0) throw ConfigError("simulator_noise must be >= 0");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{
      {"population_size", c.de.population_size},
      {"generations", c.generations},
      {"de_weight", c.de.weight},
      {"crossover_rate", c.de.crossover},
      {"gate",
       {{"kind", c.gate.kind == GateKind::absolute ? "absolute" : "quantile"}, {"value", threshold_json(c.gate.value)}}},
      {"mc_samples", c.mc_samples},
      {"seed", c.seed},
      {"simulator_noise", c.simulator_noise},
  };
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  if (!j.is_object()) throw ConfigError("optimizer config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "population_size") {
        c.de.population_size = v.get<int>();
      } else if (key == "generations") {
        c.generations = v.get<int>();
      } else if (key == "de_weight") {
        c.de.weight = v.get<double>();
      } else if (key == "crossover_rate") {
        c.de.crossover = v.get<double>();
      } else if (key == "gate") {
        for (const auto& [gk, gv] : v.items()) {
          if (gk == "kind") {
            const auto s = gv.get<std::string>();
            if (s == "absolute") c.gate.kind = GateKind::absolute;
            else if (s == "quantile") c.gate.kind = GateKind::quantile;
            else throw ConfigError("gate.kind must be 'absolute' or 'quantile'");
          } else if (gk == "value") {
            if (gv.is_string() && gv.get<std::string>() == "inf") c.gate.value = std::numeric_limits<double>::infinity();
            else c.gate.value = gv.get<double>();
          } else {
            throw ConfigError("unknown key 'gate." + gk + "'");
          }
        }
      } else if (key == "mc_samples") {
        c.mc_samples = v.get<int>();
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "simulator_noise") {
        c.simulator_noise = v.get<double>();
      } else {
        throw ConfigError("unknown optimizer config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("optimizer config: ") + e.what());
  }
}

OptRunStats optimize(const ProxyField& field, ObjectiveKind objective, const EconomicParams& econ, Model* surrogate,
                     const OptimizerConfig& config) {
  config.validate();
  if (surrogate != nullptr && !surrogate->trained()) throw ConfigError("optimize: surrogate model is not trained");
  const Bounds bounds = field.bounds();
  Rng rng(derive_seed(config.seed, 0));
  std::uint64_t sim_counter = 0;
  const Simulator simulator = [&](std::span<const double> x) {
    Rng noise(derive_seed(config.seed ^ 0x73696dULL, sim_counter++));
    return objective_value(simulate(DecisionVector(x), field, config.simulator_noise, noise), objective, econ);
  };

  OptRunStats stats;
  double best_sim = -std::numeric_limits<double>::infinity();
  auto note = [&](int generation, const RowVector& x, double value, EvalSource source) {
    stats.trace.push_back({generation, std::vector<double>(x.data(), x.data() + x.size()), value, source});
    ++stats.total_evaluations;
    if (source == EvalSource::simulator) {
      ++stats.simulator_calls;
      if (value > best_sim) {
        best_sim = value;
        stats.best_decision = DecisionVector(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      }
    } else {
      ++stats.surrogate_accepts;
    }
  };
  auto summarize = [&](int generation, const Population& pop) {
    stats.generations.push_back(
        {generation, pop.values.maxCoeff(), pop.values.mean(), stats.simulator_calls, stats.surrogate_accepts});
  };

  Population pop;
  pop.members = random_population(config.de.population_size, bounds, rng);
  pop.values.resize(pop.members.rows());
  std::vector<EvalSource> member_source(static_cast<std::size_t>(pop.members.rows()), EvalSource::simulator);
  for (Index i = 0; i < pop.members.rows(); ++i) {
    pop.values[i] = simulator(std::span<const double>(pop.members.row(i).data(), kDecisionVars));
    note(0, pop.members.row(i), pop.values[i], EvalSource::simulator);
  }
  summarize(0, pop);

  for (int g = 1; g <= config.generations; ++g) {
    const Matrix trials = de_propose(pop.members, config.de, bounds, rng);
    Vector values(trials.rows());
    std::vector<EvalSource> sources(static_cast<std::size_t>(trials.rows()), EvalSource::simulator);
    if (surrogate != nullptr) {
      GatedBatch batch = gated_evaluate(trials, *surrogate, config.gate, config.mc_samples,
                                        derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(g)), simulator);
      values = batch.values;
      sources = batch.sources;
    } else {
      for (Index i = 0; i < trials.rows(); ++i) {
        values[i] = simulator(std::span<const double>(trials.row(i).data(), kDecisionVars));
      }
    }
    for (Index i = 0; i < trials.rows(); ++i) {
      note(g, trials.row(i), values[i], sources[static_cast<std::size_t>(i)]);
      if (values[i] >= pop.values[i]) member_source[static_cast<std::size_t>(i)] = sources[static_cast<std::size_t>(i)];
    }
    de_select(pop, trials, values, Direction::maximize);
    summarize(g, pop);
  }

  Index best = 0;
  pop.values.maxCoeff(&best);
  if (member_source[static_cast<std::size_t>(best)] == EvalSource::surrogate) {
    const double verified = simulator(std::span<const double>(pop.members.row(best).data(), kDecisionVars));
    note(config.generations + 1, pop.members.row(best), verified, EvalSource::simulator);
  }
  stats.best_objective = best_sim;
  return stats;
}

nlohmann::json run_report_json(const OptRunStats& stats, const OptimizerConfig& config, bool gated) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& g : stats.generations) {
    gens.push_back({{"generation", g.generation},
                    {"best", g.best},
                    {"mean", g.mean},
                    {"simulator_calls", g.simulator_calls},
                    {"surrogate_accepts", g.surrogate_accepts}});
  }
  const auto best = stats.best_decision.values();
  return nlohmann::json{
      {"format_version", kReportFormatVersion},
      {"config", config},
      {"gated", gated},
      {"best_objective", stats.best_objective},
      {"best_decision", std::vector<double>(best.begin(), best.end())},
      {"simulator_calls", stats.simulator_calls},
      {"surrogate_accepts", stats.surrogate_accepts},
      {"total_evaluations", stats.total_evaluations},
      {"generations", gens},
  };
}

void write_trace_csv(const OptRunStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "generation";
  for (int j = 0; j < kDecisionVars; ++j) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "x%03d", j);
    out << ',' << buf;
  }
  out << ",value,source\n";
  for (const auto& r : stats.trace) {
    out << r.generation;
    for (double v : r.decision) out << ',' << format_double(v);
    out << ',' << format_double(r.value) << ',' << to_string(r.source) << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace bvr
