#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bvr::cli {

inline constexpr int kRunFormatVersion = 1;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "BVR_OUTPUT_ROOT";

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

const std::vector<std::string>& command_names();

/// One subcommand run. Relative paths inside `config` resolve against `config_dir`.
struct Invocation {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::filesystem::path config_dir = ".";
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

/// $BVR_OUTPUT_ROOT, or "bvr-runs" when unset.
std::filesystem::path default_output_root();

/// Reads the config file and fills defaults: out_dir = <root>/<command>.
/// Throws ConfigError on an unreadable or non-JSON file.
Invocation make_invocation(const std::string& command, const std::filesystem::path& config_path,
                           const std::optional<std::filesystem::path>& out_dir, std::optional<std::uint64_t> seed,
                           int threads);

/// Validates the whole config, then runs. Outputs are written to a staging
/// directory and moved into `out_dir` only on success. Throws bvr::Error.
void execute(const Invocation& inv, std::ostream& log);

/// execute() with errors mapped to exit codes and reported on `err`.
int run(const Invocation& inv, std::ostream& log, std::ostream& err);

int exit_code_for(const std::exception& e) noexcept;

/// Canonical JSON hash (16 hex digits) recorded in every run manifest.
std::string config_hash(const nlohmann::json& config);

/// Checks every output listed in `<dir>/run.json` (recursively for repro
/// runs) against its schema. Returns one message per failure.
std::vector<std::string> validate_run_directory(const std::filesystem::path& dir);

}  // namespace bvr::cli
