#include "bvr/cli/schema.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include <rapidjson/document.h>
#include <rapidjson/istreamwrapper.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "bvr/checkpoint.hpp"
#include "bvr/dataset.hpp"
#include "bvr/error.hpp"

namespace bvr::cli {
namespace {

constexpr unsigned kParseFlags = rapidjson::kParseFullPrecisionFlag | rapidjson::kParseNanAndInfFlag;

struct Compiled {
  rapidjson::Document source;
  std::unique_ptr<rapidjson::SchemaDocument> schema;
};

const Compiled& compiled(const std::string& name) {
  static std::map<std::string, std::unique_ptr<Compiled>> cache;
  auto it = cache.find(name);
  if (it != cache.end()) return *it->second;
  auto c = std::make_unique<Compiled>();
  c->source.Parse(schema_text(name).c_str());
  if (c->source.HasParseError()) throw ConfigError("bundled schema '" + name + "' is not valid JSON");
  c->schema = std::make_unique<rapidjson::SchemaDocument>(c->source);
  return *cache.emplace(name, std::move(c)).first->second;
}

std::string pointer_text(const rapidjson::Pointer& p) {
  rapidjson::StringBuffer sb;
  p.StringifyUriFragment(sb);
  return sb.GetString();
}

std::string check(const rapidjson::Document& doc, const std::string& schema) {
  rapidjson::SchemaValidator validator(*compiled(schema).schema);
  if (doc.Accept(validator)) return {};
  return "schema '" + schema + "': keyword '" + validator.GetInvalidSchemaKeyword() + "' failed at document " +
         pointer_text(validator.GetInvalidDocumentPointer()) + " (schema " +
         pointer_text(validator.GetInvalidSchemaPointer()) + ")";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void append_cell(rapidjson::Value& row, const std::string& cell, rapidjson::Document::AllocatorType& alloc,
                 bool as_text) {
  if (!as_text) {
    try {
      row.PushBack(rapidjson::Value(parse_double(cell)), alloc);
      return;
    } catch (const DataError&) {
    }
  }
  row.PushBack(rapidjson::Value(cell.c_str(), static_cast<rapidjson::SizeType>(cell.size()), alloc), alloc);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string validate_csv(const std::filesystem::path& path, const std::string& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "cannot read " + path.string();
  rapidjson::Document doc(rapidjson::kObjectType);
  auto& alloc = doc.GetAllocator();
  rapidjson::Value header(rapidjson::kArrayType);
  rapidjson::Value rows(rapidjson::kArrayType);
  std::string line;
  if (!std::getline(in, line)) return path.string() + ": empty CSV";
  for (const std::string& cell : split_line(line)) append_cell(header, cell, alloc, true);
  while (std::getline(in, line)) {
    if (line.empty()) return path.string() + ": blank line inside CSV";
    rapidjson::Value row(rapidjson::kArrayType);
    for (const std::string& cell : split_line(line)) append_cell(row, cell, alloc, false);
    rows.PushBack(row, alloc);
  }
  doc.AddMember("header", header, alloc);
  doc.AddMember("rows", rows, alloc);
  const std::string err = check(doc, schema);
  return err.empty() ? err : path.string() + ": " + err;
}

}  // namespace

std::vector<std::string> schema_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : detail::bundled_schemas()) names.push_back(name);
  return names;
}

const std::string& schema_text(const std::string& name) {
  for (const auto& entry : detail::bundled_schemas()) {
    if (entry.first == name) return entry.second;
  }
  throw ConfigError("unknown schema '" + name + "'");
}

std::string schema_errors(const nlohmann::json& doc, const std::string& schema) {
  rapidjson::Document d;
  const std::string text = doc.dump();
  d.Parse<kParseFlags>(text.c_str());
  if (d.HasParseError()) return "document is not serializable JSON";
  return check(d, schema);
}

void require_schema(const nlohmann::json& doc, const std::string& schema, const std::string& what) {
  const std::string err = schema_errors(doc, schema);
  if (!err.empty()) throw ConfigError(what + ": " + err);
}

std::string validate_file(const std::filesystem::path& path, const std::string& schema) {
  if (ends_with(schema, "_csv")) return validate_csv(path, schema);
  if (schema == "checkpoint_manifest") {
    try {
      const std::string err = schema_errors(read_checkpoint_manifest(path), schema);
      return err.empty() ? err : path.string() + ": " + err;
    } catch (const Error& e) {
      return e.what();
    }
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) return "cannot read " + path.string();
  rapidjson::IStreamWrapper wrapper(in);
  rapidjson::Document doc;
  doc.ParseStream<kParseFlags>(wrapper);
  if (doc.HasParseError()) return path.string() + ": not valid JSON";
  const std::string err = check(doc, schema);
  return err.empty() ? err : path.string() + ": " + err;
}

}  // namespace bvr::cli
