#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "bvr/model.hpp"
#include "bvr/tensor.hpp"

namespace bvr::test {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  rng.fill_normal(m);
  return m * scale;
}

inline Vector random_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

/// Pushes entries at least `gap` away from zero, keeping their sign.
inline Matrix away_from_zero(Matrix m, double gap = 1e-3) {
  for (Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < gap) v = v < 0.0 ? -gap : gap;
  }
  return m;
}

/// loss = sum(a .* out) + 0.5 * sum(out.^2), with `a` fixed per shape so the
/// loss is not invariant to batch-norm's per-column shift and scale.
struct MixedLoss {
  Matrix a;

  double operator()(const Matrix& out, Matrix& grad) {
    if (a.rows() != out.rows() || a.cols() != out.cols()) {
      a.resize(out.rows(), out.cols());
      for (Index i = 0; i < a.size(); ++i) a.data()[i] = std::sin(1.7 * static_cast<double>(i) + 0.3);
    }
    grad = a + out;
    return (a.cwiseProduct(out)).sum() + 0.5 * out.squaredNorm();
  }
};

/// Small model for fast tests.
inline ModelConfig tiny_config(Index latent = 2, LatentKind latent_kind = LatentKind::meanfield,
                               LayerKind layer_kind = LayerKind::deterministic) {
  ModelConfig c;
  c.input_dim = 5;
  c.latent_dim = latent;
  c.encoder_widths = {6, 5, 4};
  c.decoder_widths = {4, 5, 6};
  c.regressor_widths = {4, 3, 3};
  c.latent_kind = latent_kind;
  c.layer_kind = layer_kind;
  c.epochs = 3;
  c.batch_size = 16;
  c.seed = 11;
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "bvr") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace bvr::test
