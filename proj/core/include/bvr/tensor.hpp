#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace bvr {

using Index = Eigen::Index;

/// Batch-major activations: one row per sample, one column per feature.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

/// Forward-pass regime. `train` uses batch statistics in batch normalization.
enum class Mode { train, infer };

/// Seeded pseudo-random stream. Bit-reproducible on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  void fill_normal(Matrix& m);
  void fill_normal(RowVector& v);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Mixes a base seed with a stream index (splitmix64 finalizer), used to give
/// rows, passes and threads independent streams regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

bool all_finite(const Matrix& m) noexcept;
bool all_finite(std::span<const double> values) noexcept;

/// Throws ShapeError naming `what` if the shape differs.
void expect_shape(const Matrix& m, Index rows, Index cols, const std::string& what);

inline std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> as_span(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> as_span(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<const double> as_span(const RowVector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// FNV-1a 64-bit digest, used for provenance hashes of configs and checkpoints.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(const std::string& text) noexcept;
std::string hex64(std::uint64_t value);

}  // namespace bvr
