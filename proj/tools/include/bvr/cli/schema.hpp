#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace bvr::cli {

/// Names of the bundled JSON Schemas (draft-04), e.g. "train_config", "dataset_csv".
std::vector<std::string> schema_names();

/// Schema source text. Throws ConfigError for an unknown name.
const std::string& schema_text(const std::string& name);

/// Empty when `doc` conforms; otherwise a message with the failing keyword and
/// JSON pointers into the document and schema.
std::string schema_errors(const nlohmann::json& doc, const std::string& schema);

/// Throws ConfigError(`what` + details) when `doc` does not conform.
void require_schema(const nlohmann::json& doc, const std::string& schema, const std::string& what);

/// Validates a file on disk. JSON files are checked directly, CSV files as
/// {"header": [...], "rows": [[...], ...]} with numeric cells parsed as numbers,
/// and checkpoints through their manifest. Returns the error text, empty if valid.
std::string validate_file(const std::filesystem::path& path, const std::string& schema);

namespace detail {
const std::vector<std::pair<std::string, std::string>>& bundled_schemas();
}

}  // namespace bvr::cli
