#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bvr/field_proxy.hpp"
#include "bvr/normalization.hpp"

namespace bvr {

enum class SamplerKind {
  uniform,
  /// Every point evaluated by short DE searches; dense near high objective values.
  optimizer_trace,
};

std::string to_string(SamplerKind k);
SamplerKind sampler_from_string(const std::string& s);

struct DatasetSpec {
  Index samples = 1000;
  ObjectiveKind objective = ObjectiveKind::npv;
  SamplerKind sampler = SamplerKind::uniform;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  EconomicParams economics;
  double holdout_fraction = 0.2;
};

/// Raw-unit features and targets plus training-split normalization statistics.
struct LabeledDataset {
  Matrix features;
  Vector targets;
  NormStats stats;
  std::vector<Index> train_indices;
  std::vector<Index> holdout_indices;

  ObjectiveKind objective = ObjectiveKind::npv;
  SamplerKind sampler = SamplerKind::uniform;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t field_seed = 0;
  EconomicParams economics;
  Bounds bounds;
  std::vector<std::string> warnings;

  Index size() const noexcept { return features.rows(); }
  Matrix features_of(const std::vector<Index>& rows) const;
  Vector targets_of(const std::vector<Index>& rows) const;
};

LabeledDataset generate_dataset(const ProxyField& field, const DatasetSpec& spec);

/// Seeded permutation split; refits the normalization statistics on the
/// training rows.
void split_dataset(LabeledDataset& data, double holdout_fraction, std::uint64_t seed);

/// Writes `<csv>` (header x000..x089,y) and the `<csv minus .csv>.json` sidecar.
void write_dataset(const LabeledDataset& data, const std::filesystem::path& csv_path);
/// Reads a dataset CSV and its sidecar. Throws DataError.
LabeledDataset read_dataset(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
/// Throws DataError on malformed text.
double parse_double(const std::string& text);

}  // namespace bvr
