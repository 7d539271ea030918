#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "bvr/model.hpp"

namespace bvr {

inline constexpr int kCheckpointFormatVersion = 1;

/// Layout: 8-byte magic, u64 little-endian manifest length, JSON manifest,
/// then every tensor as little-endian f64 in manifest order. Non-null
/// `metadata` is stored verbatim under the manifest's "metadata" key.
void save_model(Model& model, const std::filesystem::path& path, const nlohmann::json& metadata = nullptr);

/// Rebuilds the model from the config stored in the checkpoint.
/// Throws CheckpointError (io, corrupt, version_mismatch, shape_mismatch).
Model load_model(const std::filesystem::path& path);

/// Loads into a model built from `expected`; a tensor whose stored shape does
/// not fit raises CheckpointError::Kind::shape_mismatch naming the tensor.
Model load_model(const std::filesystem::path& path, const ModelConfig& expected);

/// Validated manifest of a checkpoint (header, version and JSON only).
nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path);

/// Hex FNV-1a digest of the checkpoint file contents.
std::string checkpoint_digest(const std::filesystem::path& path);

}  // namespace bvr
