#include "bvr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <vector>

#include "bvr/error.hpp"

namespace bvr {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'B', 'V', 'R', 'C', 'K', 'P', 'T', '1'};

using Kind = CheckpointError::Kind;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Parsed {
  nlohmann::json manifest;
  std::vector<double> payload;
};

Parsed parse(const std::vector<unsigned char>& bytes, const std::string& where) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(Kind::corrupt, where + ": not a checkpoint (bad header)");
  }
  std::uint64_t manifest_len = 0;
  std::memcpy(&manifest_len, bytes.data() + 8, sizeof manifest_len);
  if (manifest_len > bytes.size() - 16) throw CheckpointError(Kind::corrupt, where + ": truncated manifest");

  Parsed p;
  try {
    p.manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(Kind::corrupt, where + ": manifest is not valid JSON");
  }
  if (!p.manifest.is_object() || !p.manifest.contains("format_version")) {
    throw CheckpointError(Kind::corrupt, where + ": manifest lacks format_version");
  }
  const auto& fv = p.manifest["format_version"];
  if (!fv.is_number_integer() || fv.get<int>() != kCheckpointFormatVersion) {
    throw CheckpointError(Kind::version_mismatch, where + ": unsupported checkpoint format_version " + fv.dump() +
                                                      " (expected " + std::to_string(kCheckpointFormatVersion) + ")");
  }

  const std::size_t payload_bytes = bytes.size() - 16 - manifest_len;
  std::uint64_t expected_doubles = 0;
  std::string checksum;
  try {
    expected_doubles = p.manifest.at("payload_values").get<std::uint64_t>();
    checksum = p.manifest.at("payload_checksum").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(Kind::corrupt, where + ": manifest lacks payload description");
  }
  if (payload_bytes != expected_doubles * sizeof(double)) {
    throw CheckpointError(Kind::corrupt, where + ": payload has " + std::to_string(payload_bytes) + " bytes, expected " +
                                             std::to_string(expected_doubles * sizeof(double)));
  }
  const std::span<const unsigned char> raw(bytes.data() + 16 + manifest_len, payload_bytes);
  if (hex64(fnv1a64(raw)) != checksum) throw CheckpointError(Kind::corrupt, where + ": payload checksum mismatch");
  p.payload.resize(expected_doubles);
  if (payload_bytes > 0) std::memcpy(p.payload.data(), raw.data(), payload_bytes);
  return p;
}

Model restore(const Parsed& p, const ModelConfig& config, const std::string& where) {
  Model model = Model::build(config);

  struct Entry {
    Index rows;
    Index cols;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> directory;
  try {
    for (const auto& t : p.manifest.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Index>>();
      if (shape.size() != 2) throw CheckpointError(Kind::corrupt, where + ": tensor shape must have two extents");
      directory[t.at("name").get<std::string>()] = {shape[0], shape[1], t.at("offset").get<std::uint64_t>()};
    }
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(Kind::corrupt, where + ": malformed tensor directory");
  }

  for (const StateTensor& t : model.state()) {
    const auto it = directory.find(t.name);
    if (it == directory.end()) {
      throw CheckpointError(Kind::shape_mismatch, where + ": tensor '" + t.name + "' missing from checkpoint");
    }
    const Entry& e = it->second;
    if (e.rows != t.rows || e.cols != t.cols) {
      throw CheckpointError(Kind::shape_mismatch, where + ": tensor '" + t.name + "' has shape [" +
                                                      std::to_string(e.rows) + ", " + std::to_string(e.cols) +
                                                      "], model expects [" + std::to_string(t.rows) + ", " +
                                                      std::to_string(t.cols) + "]");
    }
    const auto count = static_cast<std::uint64_t>(e.rows * e.cols);
    if (e.offset + count > p.payload.size()) {
      throw CheckpointError(Kind::corrupt, where + ": tensor '" + t.name + "' runs past the payload");
    }
    std::copy_n(p.payload.begin() + static_cast<std::ptrdiff_t>(e.offset), count, t.values.begin());
  }
  if (directory.size() != model.state().size()) {
    throw CheckpointError(Kind::shape_mismatch, where + ": checkpoint holds " + std::to_string(directory.size()) +
                                                    " tensors, model has " + std::to_string(model.state().size()));
  }

  try {
    if (p.manifest.contains("normalization") && !p.manifest["normalization"].is_null()) {
      model.set_normalization(p.manifest["normalization"].get<NormStats>());
    }
    model.set_trained(p.manifest.value("trained", false));
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(Kind::corrupt, where + ": malformed normalization block");
  }
  model.sync_priors();
  return model;
}

}  // namespace

void save_model(Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<double> payload;
  for (const StateTensor& t : model.state()) {
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", payload.size()}});
    payload.insert(payload.end(), t.values.begin(), t.values.end());
  }
  const std::span<const unsigned char> raw(reinterpret_cast<const unsigned char*>(payload.data()),
                                           payload.size() * sizeof(double));
  nlohmann::json manifest{
      {"format_version", kCheckpointFormatVersion},
      {"config", model.config()},
      {"trained", model.trained()},
      {"normalization", nullptr},
      {"tensors", tensors},
      {"payload_values", payload.size()},
      {"payload_checksum", hex64(fnv1a64(raw))},
  };
  if (model.normalization()) manifest["normalization"] = *model.normalization();
  if (!metadata.is_null()) manifest["metadata"] = metadata;
  const std::string text = manifest.dump();
  const std::uint64_t len = text.size();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::io, "cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw CheckpointError(Kind::io, "write failed for checkpoint " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  const Parsed p = parse(read_file(path), path.string());
  ModelConfig config;
  try {
    config = p.manifest.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError(Kind::corrupt, path.string() + ": manifest lacks a model config");
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::corrupt, path.string() + ": stored config is invalid: " + e.what());
  }
  return restore(p, config, path.string());
}

Model load_model(const std::filesystem::path& path, const ModelConfig& expected) {
  const Parsed p = parse(read_file(path), path.string());
  return restore(p, expected, path.string());
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  return parse(read_file(path), path.string()).manifest;
}

std::string checkpoint_digest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return hex64(fnv1a64(bytes));
}

}  // namespace bvr
