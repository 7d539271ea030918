#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/cli/app.hpp"
#include "bvr/dataset.hpp"

namespace bvr::cli::detail {

namespace fs = std::filesystem;

/// Files of one command run. Everything is written under a sibling staging
/// directory and moved into place by commit(); an uncommitted run leaves no
/// files behind.
class Outputs {
 public:
  explicit Outputs(fs::path final_dir);
  ~Outputs();
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;

  /// Registers a reproducible output and returns the path to write it to.
  fs::path add(const std::string& name, const std::string& schema);
  /// Registers an output excluded from the manifest digests (wall-clock data).
  fs::path add_log(const std::string& name, const std::string& schema);
  /// Registers a nested run directory; it carries its own run.json.
  fs::path add_dir(const std::string& name);

  /// Writes run.json and moves every file into the final directory.
  void commit(const std::string& command, const nlohmann::json& config, std::uint64_t seed);

  const fs::path& final_dir() const noexcept { return final_; }

 private:
  struct Entry {
    std::string name;
    std::string schema;
    bool log = false;
  };
  fs::path final_;
  fs::path stage_;
  std::vector<Entry> entries_;
  std::vector<std::string> dirs_;
};

std::string file_digest(const fs::path& path);
fs::path resolve(const Invocation& inv, const std::string& path);

/// --seed, else the config's "seed", else `fallback`.
std::uint64_t effective_seed(const Invocation& inv, std::uint64_t fallback = 0);

std::vector<Index> split_rows(const LabeledDataset& data, const std::string& split);

void cmd_generate(const Invocation& inv, std::ostream& log);
void cmd_train(const Invocation& inv, std::ostream& log);
void cmd_evaluate(const Invocation& inv, std::ostream& log);
void cmd_embed(const Invocation& inv, std::ostream& log);
void cmd_optimize(const Invocation& inv, std::ostream& log);
void cmd_repro(const Invocation& inv, std::ostream& log);

}  // namespace bvr::cli::detail
