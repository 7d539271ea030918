#include "bvr/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "bvr/error.hpp"
#include "bvr/model.hpp"

namespace bvr {

UncertainPrediction UncertainPrediction::from_samples(std::vector<double> samples) {
  if (samples.size() < 2) throw ConfigError("uncertainty: at least two samples are required");
  UncertainPrediction p;
  // Welford: a constant sample yields mean == value and std == 0 exactly.
  double mean = 0.0;
  double m2 = 0.0;
  double k = 0.0;
  for (double s : samples) {
    k += 1.0;
    const double delta = s - mean;
    mean += delta / k;
    m2 += delta * (s - mean);
  }
  p.mean = mean;
  p.std = std::sqrt(m2 / (k - 1.0));
  p.sample_count = static_cast<Index>(samples.size());
  p.samples = std::move(samples);
  return p;
}

std::vector<UncertainPrediction> mc_predict(Model& model, const Matrix& inputs, int samples, std::uint64_t seed,
                                            int threads) {
  if (!model.trained()) throw ConfigError("mc_predict: model is not trained");
  if (samples < 2) throw ConfigError("mc_predict: T must be at least 2");
  expect_shape(inputs, inputs.rows(), model.config().input_dim, "mc_predict input");
  const Index n = inputs.rows();
  const int workers = std::clamp(threads, 1, samples);

  Matrix draws(samples, n);
  auto run = [&](Model& m, int first, int stride) {
    for (int t = first; t < samples; t += stride) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
      const ForwardResult r = m.forward(inputs, ForwardOptions::monte_carlo(), rng);
      draws.row(t) = r.prediction.transpose();
    }
  };
  if (workers == 1) {
    run(model, 0, 1);
  } else {
    std::vector<Model> copies(static_cast<std::size_t>(workers), model);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, std::ref(copies[static_cast<std::size_t>(w)]), w, workers);
    for (auto& th : pool) th.join();
  }

  std::vector<UncertainPrediction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    std::vector<double> col(static_cast<std::size_t>(samples));
    for (int t = 0; t < samples; ++t) col[static_cast<std::size_t>(t)] = draws(t, i);
    out.push_back(UncertainPrediction::from_samples(std::move(col)));
  }
  return out;
}

UncertainPrediction mc_predict(Model& model, std::span<const double> input, int samples, std::uint64_t seed) {
  Matrix x(1, static_cast<Index>(input.size()));
  std::copy(input.begin(), input.end(), x.data());
  return mc_predict(model, x, samples, seed).front();
}

GateDecision gate(const UncertainPrediction& pred, double threshold) {
  GateDecision d;
  d.threshold_used = threshold;
  d.std_observed = pred.std;
  d.verdict = pred.std <= threshold ? Verdict::accept : Verdict::simulate;
  return d;
}

double mse(const Vector& y, const Vector& y_hat) {
  if (y.size() != y_hat.size()) throw ShapeError("mse: length mismatch");
  if (y.size() == 0) throw ShapeError("mse: empty input");
  return (y - y_hat).squaredNorm() / static_cast<double>(y.size());
}

double r2_score(const Vector& y, const Vector& y_hat) {
  if (y.size() != y_hat.size()) throw ShapeError("r2_score: length mismatch");
  if (y.size() < 2) throw ShapeError("r2_score: at least two points are required");
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot <= 0.0) throw DataError("r2_score: targets are constant");
  return 1.0 - (y - y_hat).squaredNorm() / ss_tot;
}

EvaluationReport evaluate_model(Model& model, const Matrix& inputs, const Vector& truths, int mc_samples,
                                std::uint64_t seed, int threads) {
  if (truths.size() != inputs.rows()) throw ShapeError("evaluate_model: truths do not match inputs");
  const auto preds = mc_predict(model, inputs, mc_samples, seed, threads);
  EvaluationReport rep;
  rep.mc_samples = mc_samples;
  rep.seed = seed;
  Vector means(truths.size());
  double std_sum = 0.0;
  for (Index i = 0; i < truths.size(); ++i) {
    const auto& p = preds[static_cast<std::size_t>(i)];
    means[i] = p.mean;
    std_sum += p.std;
    rep.rows.push_back({truths[i], p.mean, p.std});
  }
  rep.mse = mse(truths, means);
  rep.r2 = r2_score(truths, means);
  rep.mean_std = std_sum / static_cast<double>(truths.size());
  return rep;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const EvaluationRow& r : report.rows) rows.push_back({{"truth", r.truth}, {"mean", r.mean}, {"std", r.std}});
  return nlohmann::json{
      {"dataset", report.dataset},   {"model", report.model},   {"split", report.split},
      {"mc_samples", report.mc_samples}, {"seed", report.seed}, {"mse", report.mse},
      {"r2", report.r2},             {"mean_std", report.mean_std}, {"count", report.rows.size()},
      {"rows", std::move(rows)},
  };
}

}  // namespace bvr
