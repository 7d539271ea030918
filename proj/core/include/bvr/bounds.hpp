#pragma once

#include "bvr/tensor.hpp"

namespace bvr {

/// Axis-aligned box in decision space.
struct Bounds {
  RowVector lower;
  RowVector upper;

  Index dim() const noexcept { return lower.size(); }

  /// Clamps in place; returns true if any coordinate moved.
  bool clamp(double* values) const noexcept;
  bool contains(const RowVector& x) const noexcept;
  /// Box scaled by `factor` about its center.
  Bounds expanded(double factor) const;
};

inline bool Bounds::clamp(double* values) const noexcept {
  bool moved = false;
  for (Index j = 0; j < dim(); ++j) {
    if (values[j] < lower[j]) {
      values[j] = lower[j];
      moved = true;
    } else if (values[j] > upper[j]) {
      values[j] = upper[j];
      moved = true;
    }
  }
  return moved;
}

inline bool Bounds::contains(const RowVector& x) const noexcept {
  for (Index j = 0; j < dim(); ++j) {
    if (x[j] < lower[j] || x[j] > upper[j]) return false;
  }
  return true;
}

inline Bounds Bounds::expanded(double factor) const {
  const RowVector center = 0.5 * (lower + upper);
  const RowVector half = 0.5 * factor * (upper - lower);
  return {center - half, center + half};
}

}  // namespace bvr
