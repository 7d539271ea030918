#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "bvr/checkpoint.hpp"
#include "bvr/cli/schema.hpp"
#include "bvr/embedding.hpp"
#include "bvr/error.hpp"
#include "bvr/optimizer.hpp"
#include "bvr/training.hpp"
#include "bvr/uncertainty.hpp"
#include "internal.hpp"

namespace bvr::cli::detail {
namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

void check_normalization(const Model& model, const LabeledDataset& data, const std::string& ckpt) {
  if (!model.trained()) throw ConfigError(ckpt + ": checkpoint holds an untrained model");
  if (!model.normalization()) throw DataError(ckpt + ": checkpoint carries no normalization statistics");
  const NormStats& a = *model.normalization();
  const NormStats& b = data.stats;
  const bool same = a.feature_mean.size() == b.feature_mean.size() && a.feature_mean == b.feature_mean &&
                    a.feature_std == b.feature_std && a.target_mean == b.target_mean && a.target_std == b.target_std;
  if (!same) {
    throw DataError(ckpt + ": normalization statistics do not match the dataset's training split "
                           "(the model was trained on a different dataset or split)");
  }
}

double score_r2(const Vector& y, const Vector& y_hat) {
  try {
    return r2_score(y, y_hat);
  } catch (const Error&) {
    return 0.0;
  }
}

nlohmann::json split_metrics(Model& model, const LabeledDataset& data, const std::vector<Index>& rows) {
  if (rows.size() < 2) return nullptr;
  const NormStats& s = data.stats;
  const Vector y = s.normalize_targets(data.targets_of(rows));
  const Vector y_hat = model.predict(s.normalize(data.features_of(rows)));
  return {{"mse", mse(y, y_hat)}, {"r2", score_r2(y, y_hat)}};
}

std::string beta_tag(double beta) { return "beta" + format_double(beta); }

std::vector<Index> subsample(std::vector<Index> rows, Index keep, std::uint64_t seed) {
  if (keep >= static_cast<Index>(rows.size())) return rows;
  Rng rng(derive_seed(seed, 0x656d62));
  for (std::size_t i = 0; i < static_cast<std::size_t>(keep); ++i) {
    std::swap(rows[i], rows[i + rng.index(rows.size() - i)]);
  }
  rows.resize(static_cast<std::size_t>(keep));
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_generate(const Invocation& inv, std::ostream& log) {
  const nlohmann::json& cfg = inv.config;
  require_schema(cfg, "generate_config", "generate config");
  const std::uint64_t seed = effective_seed(inv);

  DatasetSpec spec;
  spec.samples = cfg.at("samples").get<Index>();
  spec.objective = objective_from_string(cfg.value("objective", "npv"));
  spec.sampler = sampler_from_string(cfg.value("sampler", "uniform"));
  spec.noise_std = cfg.value("noise_std", 0.0);
  spec.holdout_fraction = cfg.value("holdout_fraction", 0.2);
  spec.seed = seed;
  if (cfg.contains("economics")) spec.economics = cfg.at("economics").get<EconomicParams>();
  const ProxyField field = ProxyField::generate(cfg.value("field_seed", std::uint64_t{0}));

  nlohmann::json recorded = cfg;
  recorded["seed"] = seed;

  const LabeledDataset data = generate_dataset(field, spec);
  Outputs out(inv.out_dir);
  write_dataset(data, out.add("dataset.csv", "dataset_csv"));
  out.add("dataset.json", "dataset_sidecar");
  write_json(out.add("field.json", "field"), field);
  out.commit("generate", recorded, seed);

  std::vector<double> y(data.targets.begin(), data.targets.end());
  std::sort(y.begin(), y.end());
  log << "generate: " << data.size() << " rows (" << to_string(spec.objective) << ", " << to_string(spec.sampler)
      << ") min " << y.front() << " median " << y[y.size() / 2] << " max " << y.back() << '\n';
  for (const std::string& w : data.warnings) log << "generate: warning: " << w << '\n';
}

// ---------------------------------------------------------------------------

void cmd_train(const Invocation& inv, std::ostream& log) {
  const nlohmann::json& cfg = inv.config;
  require_schema(cfg, "train_config", "train config");
  ModelConfig base;
  if (cfg.contains("model")) base = cfg.at("model").get<ModelConfig>();
  if (inv.seed || cfg.contains("seed")) base.seed = effective_seed(inv);
  const std::uint64_t seed = base.seed;
  const bool sweep = cfg.contains("betas");
  const std::vector<double> betas = sweep ? cfg.at("betas").get<std::vector<double>>() : std::vector<double>{base.beta};
  if (std::set<double>(betas.begin(), betas.end()).size() != betas.size()) {
    throw ConfigError("train config: betas contains duplicates");
  }
  for (double b : betas) {
    ModelConfig c = base;
    c.beta = b;
    c.validate();
  }

  const std::string dataset_arg = cfg.at("dataset").get<std::string>();
  const LabeledDataset data = read_dataset(resolve(inv, dataset_arg));
  if (data.features.cols() != base.input_dim) {
    throw ConfigError("train config: model input_dim " + std::to_string(base.input_dim) + " but the dataset has " +
                      std::to_string(data.features.cols()) + " feature columns");
  }
  if (data.train_indices.size() < 2) throw DataError("train: dataset has fewer than two training rows");

  nlohmann::json recorded = cfg;
  recorded["seed"] = seed;
  recorded["model"] = base;
  const std::string hash = config_hash(recorded);

  Outputs out(inv.out_dir);
  std::ostringstream timing;
  timing << "stage,seconds\n";
  nlohmann::json runs = nlohmann::json::array();
  for (double beta : betas) {
    ModelConfig c = base;
    c.beta = beta;
    const std::string suffix = sweep ? "_" + beta_tag(beta) : "";
    const std::string ckpt_name = "model" + suffix + ".ckpt";
    const std::string history_name = "history" + suffix + ".csv";

    std::ofstream history(out.add(history_name, "history_csv"), std::ios::binary);
    history << "epoch,learning_rate,train_reconstruction,train_kl,train_regression,train_total,"
               "val_reconstruction,val_kl,val_regression,val_total\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Model model = Model::build(c);
    const TrainingHistory h = train(model, data, [&](const EpochRecord& r) {
      const JointLossBreakdown v = r.has_validation ? r.validation : JointLossBreakdown{nan, nan, nan, nan};
      history << r.epoch << ',' << format_double(r.learning_rate) << ',' << format_double(r.train.reconstruction_mse)
              << ',' << format_double(r.train.kl) << ',' << format_double(r.train.regression_mse) << ','
              << format_double(r.train.total) << ',' << format_double(v.reconstruction_mse) << ','
              << format_double(v.kl) << ',' << format_double(v.regression_mse) << ',' << format_double(v.total)
              << '\n';
      timing << beta_tag(beta) << "/epoch" << r.epoch << ',' << r.wall_seconds << '\n';
    });
    history.close();
    if (!history) throw DataError("cannot write " + history_name);

    save_model(model, out.add(ckpt_name, "checkpoint_manifest"),
               {{"command", "train"}, {"config_hash", hash}, {"seed", seed}, {"dataset", dataset_arg}});
    nlohmann::json run{{"beta", beta},
                       {"latent_dim", c.latent_dim},
                       {"layer_kind", to_string(c.layer_kind)},
                       {"checkpoint", ckpt_name},
                       {"history", history_name},
                       {"epochs_run", h.size()},
                       {"train", split_metrics(model, data, data.train_indices)},
                       {"validation", split_metrics(model, data, data.holdout_indices)}};
    log << "train: beta " << beta << " latent " << c.latent_dim << " " << to_string(c.layer_kind) << ": "
        << h.size() << " epochs, train r2 " << run["train"].value("r2", 0.0);
    if (!run["validation"].is_null()) log << ", holdout r2 " << run["validation"].value("r2", 0.0);
    log << '\n';
    runs.push_back(std::move(run));
  }
  {
    std::ofstream t(out.add_log("timing.csv", "timing_csv"), std::ios::binary);
    t << timing.str();
  }
  write_json(out.add("train_metrics.json", "train_metrics"),
             {{"format_version", kRunFormatVersion},
              {"config_hash", hash},
              {"seed", seed},
              {"dataset", dataset_arg},
              {"runs", runs}});
  out.commit("train", recorded, seed);
}

// ---------------------------------------------------------------------------

void cmd_evaluate(const Invocation& inv, std::ostream& log) {
  const nlohmann::json& cfg = inv.config;
  require_schema(cfg, "evaluate_config", "evaluate config");
  const std::uint64_t seed = effective_seed(inv);
  const int samples = cfg.value("mc_samples", kDefaultMcSamples);
  const std::string split = cfg.value("split", "holdout");
  const std::string ckpt_arg = cfg.at("checkpoint").get<std::string>();
  const std::string dataset_arg = cfg.at("dataset").get<std::string>();

  Model model = load_model(resolve(inv, ckpt_arg));
  const LabeledDataset data = read_dataset(resolve(inv, dataset_arg));
  check_normalization(model, data, ckpt_arg);
  const std::vector<Index> rows = split_rows(data, split);
  if (rows.size() < 2) throw DataError("evaluate: split '" + split + "' has fewer than two rows");

  nlohmann::json recorded = cfg;
  recorded["seed"] = seed;
  const NormStats& s = data.stats;
  EvaluationReport report = evaluate_model(model, s.normalize(data.features_of(rows)),
                                           s.normalize_targets(data.targets_of(rows)), samples, seed, inv.threads);
  report.dataset = dataset_arg;
  report.model = checkpoint_digest(resolve(inv, ckpt_arg));
  report.split = split;

  nlohmann::json j = to_json(report);
  j["format_version"] = kRunFormatVersion;
  j["config_hash"] = config_hash(recorded);
  j["units"] = "standardized";

  std::vector<CrossplotRow> cross;
  cross.reserve(report.rows.size());
  for (const EvaluationRow& r : report.rows) cross.push_back({r.truth, r.mean, r.std, split});

  Outputs out(inv.out_dir);
  write_json(out.add("evaluation.json", "evaluation"), j);
  export_crossplot(cross, out.add("crossplot.csv", "crossplot_csv"));
  out.commit("evaluate", recorded, seed);
  log << "evaluate: " << split << " n=" << rows.size() << " T=" << samples << " mse " << report.mse << " r2 "
      << report.r2 << " mean std " << report.mean_std << '\n';
}

// ---------------------------------------------------------------------------

void cmd_embed(const Invocation& inv, std::ostream& log) {
  const nlohmann::json& cfg = inv.config;
  require_schema(cfg, "embed_config", "embed config");
  const std::uint64_t seed = effective_seed(inv);
  std::vector<std::string> methods = cfg.value("methods", std::vector<std::string>{"pca"});
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  const bool wants_tsne = std::find(methods.begin(), methods.end(), "tsne") != methods.end();
  const std::string split = cfg.value("split", "all");

  TsneParams tsne;
  tsne.seed = seed;
  if (cfg.contains("tsne")) {
    const nlohmann::json& t = cfg.at("tsne");
    tsne.perplexity = t.value("perplexity", tsne.perplexity);
    tsne.iterations = t.value("iterations", tsne.iterations);
    tsne.learning_rate = t.value("learning_rate", tsne.learning_rate);
    tsne.early_exaggeration = t.value("early_exaggeration", tsne.early_exaggeration);
    tsne.exaggeration_iterations = t.value("exaggeration_iterations", tsne.exaggeration_iterations);
    tsne.momentum_switch = tsne.exaggeration_iterations;
  }

  const std::string ckpt_arg = cfg.at("checkpoint").get<std::string>();
  Model model = load_model(resolve(inv, ckpt_arg));
  const LabeledDataset data = read_dataset(resolve(inv, cfg.at("dataset").get<std::string>()));
  check_normalization(model, data, ckpt_arg);

  std::vector<Index> rows = split_rows(data, split);
  if (cfg.contains("subsample")) rows = subsample(std::move(rows), cfg.at("subsample").get<Index>(), seed);
  const auto n = static_cast<Index>(rows.size());
  if (wants_tsne && n > kTsneMaxPoints) {
    throw ConfigError("embed: " + std::to_string(n) + " points exceed the exact t-SNE cap of " +
                      std::to_string(kTsneMaxPoints) + "; set \"subsample\" in the embed config");
  }
  if (wants_tsne && !(tsne.perplexity >= 5.0 && tsne.perplexity <= static_cast<double>(n - 1) / 3.0)) {
    throw ConfigError("embed: t-SNE perplexity " + format_double(tsne.perplexity) + " is infeasible for " +
                      std::to_string(n) + " points; lower \"tsne.perplexity\" or raise \"subsample\"");
  }
  if (n < 3) throw DataError("embed: need at least three rows");

  nlohmann::json recorded = cfg;
  recorded["seed"] = seed;

  EmbeddingSet emb = extract_embeddings(model, data, rows);
  emb.model_hash = checkpoint_digest(resolve(inv, ckpt_arg));

  Outputs out(inv.out_dir);
  {
    std::ofstream csv(out.add("latent.csv", "latent_csv"), std::ios::binary);
    csv << "id";
    for (Index j = 0; j < emb.latent.cols(); ++j) {
      std::string name = std::to_string(j);
      csv << ",z" << std::string(3 - std::min<std::size_t>(3, name.size()), '0') << name;
    }
    csv << ",target_scaled\n";
    for (Index i = 0; i < emb.latent.rows(); ++i) {
      csv << emb.ids[static_cast<std::size_t>(i)];
      for (Index j = 0; j < emb.latent.cols(); ++j) csv << ',' << format_double(emb.latent(i, j));
      csv << ',' << format_double(emb.targets[i]) << '\n';
    }
    if (!csv) throw DataError("cannot write latent.csv");
  }
  for (const std::string& method : methods) {
    Projection2D proj = method == "pca" ? pca_project(emb.latent) : tsne_project(emb.latent, tsne);
    proj.seed = seed;
    write_projection(proj, emb, out.add("projection_" + method + ".csv", "projection_csv"));
    out.add("projection_" + method + ".json", "projection_sidecar");
    log << "embed: " << method << " on " << n << " points";
    if (method == "tsne") log << ", KL " << proj.initial_kl << " -> " << proj.final_kl;
    if (method == "pca") log << ", explained variance " << proj.explained_variance[0] << ", " << proj.explained_variance[1];
    log << '\n';
  }
  out.commit("embed", recorded, seed);
}

// ---------------------------------------------------------------------------

void cmd_optimize(const Invocation& inv, std::ostream& log) {
  const nlohmann::json& cfg = inv.config;
  require_schema(cfg, "optimize_config", "optimize config");
  OptimizerConfig oc = cfg.at("optimizer").get<OptimizerConfig>();
  oc.seed = effective_seed(inv, oc.seed);
  oc.validate();
  const std::uint64_t seed = oc.seed;
  const ObjectiveKind objective = objective_from_string(cfg.value("objective", "npv"));
  const EconomicParams econ = cfg.contains("economics") ? cfg.at("economics").get<EconomicParams>() : EconomicParams{};
  const std::uint64_t field_seed = cfg.value("field_seed", std::uint64_t{0});
  const bool has_checkpoint = cfg.contains("checkpoint");
  const bool gated = cfg.value("gated", has_checkpoint);
  const bool paired = cfg.value("paired", true);
  if (gated && !has_checkpoint) throw ConfigError("optimize config: a gated run needs \"checkpoint\"");

  std::optional<Model> surrogate;
  nlohmann::json model_digest = nullptr;
  if (gated) {
    const fs::path ckpt = resolve(inv, cfg.at("checkpoint").get<std::string>());
    surrogate = load_model(ckpt);
    if (!surrogate->trained()) throw ConfigError("optimize: checkpoint holds an untrained model");
    if (!surrogate->normalization()) throw DataError("optimize: checkpoint carries no normalization statistics");
    if (surrogate->config().input_dim != kDecisionVars) {
      throw DataError("optimize: surrogate input_dim " + std::to_string(surrogate->config().input_dim) +
                      " does not match the 90 decision variables");
    }
    model_digest = checkpoint_digest(ckpt);
  }

  nlohmann::json recorded = cfg;
  recorded["seed"] = seed;
  recorded["optimizer"] = oc;
  const ProxyField field = ProxyField::generate(field_seed);

  nlohmann::json report{{"format_version", kRunFormatVersion},
                        {"config_hash", config_hash(recorded)},
                        {"seed", seed},
                        {"objective", to_string(objective)},
                        {"field_seed", field_seed},
                        {"model", model_digest},
                        {"gated", nullptr},
                        {"ungated", nullptr},
                        {"comparison", nullptr}};
  Outputs out(inv.out_dir);
  std::optional<OptRunStats> g;
  std::optional<OptRunStats> u;
  if (gated) {
    g = optimize(field, objective, econ, &*surrogate, oc);
    report["gated"] = run_report_json(*g, oc, true);
    write_trace_csv(*g, out.add("trace_gated.csv", "trace_csv").string());
    log << "optimize: gated best " << g->best_objective << " with " << g->simulator_calls << " simulator calls, "
        << g->surrogate_accepts << " surrogate accepts\n";
  }
  if (!gated || paired) {
    u = optimize(field, objective, econ, nullptr, oc);
    report["ungated"] = run_report_json(*u, oc, false);
    write_trace_csv(*u, out.add("trace_ungated.csv", "trace_csv").string());
    log << "optimize: ungated best " << u->best_objective << " with " << u->simulator_calls << " simulator calls\n";
  }
  if (g && u) {
    report["comparison"] = {
        {"best_ratio", g->best_objective / u->best_objective},
        {"simulator_call_ratio", static_cast<double>(g->simulator_calls) / static_cast<double>(u->simulator_calls)}};
  }
  write_json(out.add("optimize_report.json", "optimize_report"), report);
  out.commit("optimize", recorded, seed);
}

}  // namespace bvr::cli::detail
