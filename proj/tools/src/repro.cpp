#include <chrono>
#include <fstream>

#include "bvr/cli/schema.hpp"
#include "bvr/error.hpp"
#include "internal.hpp"

namespace bvr::cli::detail {
namespace {

struct Stage {
  std::string command;
  std::string directory;
  nlohmann::json config;
};

struct Preset {
  int samples = 0;
  int epochs = 0;
  int lr_every = 0;
  bool latent90 = true;
  std::vector<double> betas;
  bool probabilistic = false;
  int mc_samples = 0;
  int tsne_points = 0;
  int tsne_iterations = 0;
  int population = 0;
  int generations = 0;
  int gate_mc_samples = 0;
};

Preset preset_for(const std::string& name) {
  if (name == "smoke") return {600, 3, 1, false, {1.0}, false, 20, 200, 500, 12, 3, 20};
  if (name == "reduced") return {5000, 40, 10, true, {1.0, 3.0, 10.0}, false, 1000, 1000, 1000, 60, 30, 100};
  return {20000, 300, 60, true, {1.0, 3.0, 10.0}, true, 1000, 2000, 1000, 60, 50, 100};
}

nlohmann::json model_config(const Preset& p, int latent, const std::string& layer_kind, std::uint64_t seed) {
  return {{"latent_dim", latent},
          {"layer_kind", layer_kind},
          {"epochs", p.epochs},
          {"lr", {{"initial", 3e-3}, {"factor", 0.5}, {"every", p.lr_every}}},
          {"seed", seed}};
}

std::string beta_name(double beta) { return "model_beta" + format_double(beta) + ".ckpt"; }

std::vector<Stage> plan(const std::string& name, std::uint64_t seed) {
  const Preset p = preset_for(name);
  std::vector<Stage> stages;
  stages.push_back({"generate", "generate",
                    {{"samples", p.samples}, {"objective", "npv"}, {"field_seed", 0}, {"seed", seed}}});
  const std::string dataset = "generate/dataset.csv";
  if (p.latent90) {
    stages.push_back({"train", "train_latent90",
                      {{"dataset", dataset}, {"model", model_config(p, 90, "deterministic", seed)}}});
  }
  stages.push_back({"train", "train_latent3",
                    {{"dataset", dataset}, {"model", model_config(p, 3, "deterministic", seed)}, {"betas", p.betas}}});
  if (p.probabilistic) {
    stages.push_back({"train", "train_probabilistic",
                      {{"dataset", dataset}, {"model", model_config(p, 3, "probabilistic", seed)}}});
  }

  std::vector<std::pair<std::string, std::string>> models;
  if (p.latent90) models.emplace_back("latent90", "train_latent90/model.ckpt");
  for (double b : p.betas) {
    models.emplace_back("latent3_beta" + format_double(b), "train_latent3/" + beta_name(b));
  }
  if (p.probabilistic) models.emplace_back("probabilistic", "train_probabilistic/model.ckpt");
  for (const auto& [tag, ckpt] : models) {
    stages.push_back({"evaluate", "evaluate_" + tag,
                      {{"checkpoint", ckpt}, {"dataset", dataset}, {"mc_samples", p.mc_samples}, {"seed", seed}}});
  }

  const std::string main_model = "train_latent3/" + beta_name(p.betas.front());
  stages.push_back({"embed", "embed",
                    {{"checkpoint", main_model},
                     {"dataset", dataset},
                     {"methods", {"pca", "tsne"}},
                     {"subsample", p.tsne_points},
                     {"tsne", {{"iterations", p.tsne_iterations}}},
                     {"seed", seed}}});
  stages.push_back({"optimize", "optimize",
                    {{"checkpoint", main_model},
                     {"objective", "npv"},
                     {"field_seed", 0},
                     {"paired", true},
                     {"optimizer",
                      {{"population_size", p.population},
                       {"generations", p.generations},
                       {"mc_samples", p.gate_mc_samples},
                       {"seed", seed}}}}});
  return stages;
}

}  // namespace

void cmd_repro(const Invocation& inv, std::ostream& log) {
  require_schema(inv.config, "repro_config", "repro config");
  const std::string preset = inv.config.at("preset").get<std::string>();
  const std::uint64_t seed = effective_seed(inv);
  nlohmann::json recorded = inv.config;
  recorded["seed"] = seed;

  const std::vector<Stage> stages = plan(preset, seed);
  for (const Stage& s : stages) require_schema(s.config, s.command + "_config", "repro stage " + s.directory);

  Outputs out(inv.out_dir);
  nlohmann::json listed = nlohmann::json::array();
  const auto start = std::chrono::steady_clock::now();
  for (const Stage& s : stages) {
    Invocation sub;
    sub.command = s.command;
    sub.config = s.config;
    sub.out_dir = out.add_dir(s.directory);
    sub.config_dir = sub.out_dir.parent_path();
    sub.threads = inv.threads;
    log << "repro: " << s.command << " -> " << s.directory << '\n';
    execute(sub, log);
    listed.push_back({{"command", s.command}, {"directory", s.directory}});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  {
    std::ofstream m(out.add("repro.json", "repro_manifest"), std::ios::binary);
    const nlohmann::json manifest{{"format_version", kRunFormatVersion},
                                  {"config_hash", config_hash(recorded)},
                                  {"seed", seed},
                                  {"preset", preset},
                                  {"stages", listed}};
    m << manifest.dump(2) << '\n';
  }
  {
    std::ofstream t(out.add_log("timing.csv", "timing_csv"), std::ios::binary);
    t << "stage,seconds\nrepro," << seconds << '\n';
  }
  out.commit("repro", recorded, seed);
  log << "repro: preset " << preset << " finished " << stages.size() << " stages in " << seconds << " s\n";
}

}  // namespace bvr::cli::detail
