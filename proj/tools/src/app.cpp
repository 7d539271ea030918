#include "bvr/cli/app.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "bvr/cli/schema.hpp"
#include "bvr/error.hpp"
#include "internal.hpp"

namespace bvr::cli {
namespace detail {

Outputs::Outputs(fs::path final_dir) : final_(std::move(final_dir)) {
  const fs::path parent = final_.has_parent_path() ? final_.parent_path() : fs::path(".");
  stage_ = parent / ("." + final_.filename().string() + ".staging-" + std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(stage_, ec);
  fs::create_directories(stage_);
}

Outputs::~Outputs() {
  std::error_code ec;
  fs::remove_all(stage_, ec);
}

fs::path Outputs::add(const std::string& name, const std::string& schema) {
  entries_.push_back({name, schema, false});
  return stage_ / name;
}

fs::path Outputs::add_log(const std::string& name, const std::string& schema) {
  entries_.push_back({name, schema, true});
  return stage_ / name;
}

fs::path Outputs::add_dir(const std::string& name) {
  dirs_.push_back(name);
  return stage_ / name;
}

void Outputs::commit(const std::string& command, const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json outputs = nlohmann::json::array();
  nlohmann::json logs = nlohmann::json::array();
  for (const Entry& e : entries_) {
    if (!fs::exists(stage_ / e.name)) throw DataError("internal: output " + e.name + " was registered but not written");
    if (e.log) {
      logs.push_back({{"file", e.name}, {"schema", e.schema}});
    } else {
      outputs.push_back({{"file", e.name}, {"schema", e.schema}, {"digest", file_digest(stage_ / e.name)}});
    }
  }
  const nlohmann::json manifest{{"format_version", kRunFormatVersion},
                                {"command", command},
                                {"config_hash", config_hash(config)},
                                {"seed", seed},
                                {"config", config},
                                {"outputs", outputs},
                                {"logs", logs}};
  {
    std::ofstream out(stage_ / "run.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("cannot write run manifest in " + stage_.string());
  }
  fs::create_directories(final_);
  for (const std::string& d : dirs_) {
    std::error_code ec;
    fs::remove_all(final_ / d, ec);
    fs::rename(stage_ / d, final_ / d);
  }
  for (const Entry& e : entries_) fs::rename(stage_ / e.name, final_ / e.name);
  fs::rename(stage_ / "run.json", final_ / "run.json");
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return hex64(fnv1a64(bytes));
}

fs::path resolve(const Invocation& inv, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : inv.config_dir / p;
}

std::uint64_t effective_seed(const Invocation& inv, std::uint64_t fallback) {
  if (inv.seed) return *inv.seed;
  if (inv.config.contains("seed")) return inv.config.at("seed").get<std::uint64_t>();
  return fallback;
}

std::vector<Index> split_rows(const LabeledDataset& data, const std::string& split) {
  if (split == "holdout") return data.holdout_indices;
  if (split == "train") return data.train_indices;
  std::vector<Index> all(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  return all;
}

}  // namespace detail

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"generate", "train", "evaluate", "embed", "optimize", "repro"};
  return names;
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return (env != nullptr && *env != '\0') ? std::filesystem::path(env) : std::filesystem::path("bvr-runs");
}

Invocation make_invocation(const std::string& command, const std::filesystem::path& config_path,
                           const std::optional<std::filesystem::path>& out_dir, std::optional<std::uint64_t> seed,
                           int threads) {
  Invocation inv;
  inv.command = command;
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + config_path.string());
  try {
    inv.config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + config_path.string() + " is not valid JSON: " + e.what());
  }
  inv.config_dir = config_path.has_parent_path() ? config_path.parent_path() : std::filesystem::path(".");
  inv.out_dir = out_dir ? *out_dir : default_output_root() / command;
  inv.seed = seed;
  if (threads < 1) throw ConfigError("--threads must be >= 1");
  inv.threads = threads;
  return inv;
}

void execute(const Invocation& inv, std::ostream& log) {
  if (inv.command == "generate") return detail::cmd_generate(inv, log);
  if (inv.command == "train") return detail::cmd_train(inv, log);
  if (inv.command == "evaluate") return detail::cmd_evaluate(inv, log);
  if (inv.command == "embed") return detail::cmd_embed(inv, log);
  if (inv.command == "optimize") return detail::cmd_optimize(inv, log);
  if (inv.command == "repro") return detail::cmd_repro(inv, log);
  throw ConfigError("unknown command '" + inv.command + "'");
}

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return kExitData;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return kExitData;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kExitNumeric;
  if (dynamic_cast<const DomainError*>(&e) != nullptr) return kExitNumeric;
  return kExitInternal;
}

int run(const Invocation& inv, std::ostream& log, std::ostream& err) {
  try {
    execute(inv, log);
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    const char* kind = code == kExitConfig ? "config error" : code == kExitData ? "data error"
                                                              : code == kExitNumeric ? "numeric error"
                                                                                     : "error";
    err << "bvr " << inv.command << ": " << kind << ": " << e.what() << '\n';
    return code;
  }
}

std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a64(config.dump())); }

std::vector<std::string> validate_run_directory(const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  const auto manifest_path = dir / "run.json";
  if (std::string e = validate_file(manifest_path, "run_manifest"); !e.empty()) {
    problems.push_back(e);
    return problems;
  }
  std::ifstream in(manifest_path);
  const nlohmann::json manifest = nlohmann::json::parse(in);
  for (const char* key : {"outputs", "logs"}) {
    for (const auto& entry : manifest.at(key)) {
      const auto file = dir / entry.at("file").get<std::string>();
      if (std::string e = validate_file(file, entry.at("schema").get<std::string>()); !e.empty()) {
        problems.push_back(e);
      }
      if (entry.contains("digest") && detail::file_digest(file) != entry.at("digest").get<std::string>()) {
        problems.push_back(file.string() + ": digest differs from run.json");
      }
    }
  }
  if (manifest.at("command") == "repro") {
    std::ifstream rin(dir / "repro.json");
    const nlohmann::json repro = nlohmann::json::parse(rin);
    for (const auto& stage : repro.at("stages")) {
      const auto sub = validate_run_directory(dir / stage.at("directory").get<std::string>());
      problems.insert(problems.end(), sub.begin(), sub.end());
    }
  }
  return problems;
}

}  // namespace bvr::cli
