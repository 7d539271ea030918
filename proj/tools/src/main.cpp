#include <iostream>

#include <CLI11.hpp>

#include "bvr/cli/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bvr: Bayesian VAE regression surrogates for well placement and control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bvr 0.1.0");

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  const char* help[] = {"Sample the proxy field and write a labeled dataset",
                        "Train one model or a beta sweep",
                        "Monte Carlo dropout metrics on a dataset split",
                        "Latent PCA / t-SNE projections",
                        "Differential evolution with an uncertainty-gated surrogate",
                        "Run a preset pipeline end to end"};
  std::size_t i = 0;
  for (const std::string& name : bvr::cli::command_names()) {
    CLI::App* sub = app.add_subcommand(name, help[i++]);
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory (default $BVR_OUTPUT_ROOT/<command>)");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bvr::cli::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto inv = bvr::cli::make_invocation(
        command, config, out ? std::optional<std::filesystem::path>(*out) : std::nullopt, seed, threads);
    return bvr::cli::run(inv, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "bvr " << command << ": config error: " << e.what() << '\n';
    return bvr::cli::exit_code_for(e);
  }
}
