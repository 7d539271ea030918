#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/tensor.hpp"

namespace bvr {

/// Per-column z-score statistics for features and the scalar target.
/// Columns with zero variance are left unscaled (`feature_scaled[j] == false`).
struct NormStats {
  RowVector feature_mean;
  RowVector feature_std;
  std::vector<bool> feature_scaled;
  double target_mean = 0.0;
  double target_std = 1.0;

  Index feature_dim() const noexcept { return feature_mean.size(); }

  /// Statistics over the given rows (all rows when `rows` is empty). Appends a
  /// message to `warnings` for every zero-variance column.
  static NormStats fit(const Matrix& features, const Vector& targets, const std::vector<Index>& rows = {},
                       std::vector<std::string>* warnings = nullptr);

  Matrix normalize(const Matrix& features) const;
  Matrix denormalize(const Matrix& features) const;
  Vector normalize_targets(const Vector& targets) const;
  Vector denormalize_targets(const Vector& targets) const;
  double normalize_target(double y) const noexcept { return (y - target_mean) / target_std; }
  double denormalize_target(double y) const noexcept { return y * target_std + target_mean; }
  /// Converts a standard deviation in normalized target units to objective units.
  double denormalize_target_std(double s) const noexcept { return s * target_std; }
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

}  // namespace bvr
