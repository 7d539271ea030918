#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvr/tensor.hpp"

namespace bvr {

class Model;
struct LabeledDataset;

/// Posterior means of the latent code, one row per sample, with the
/// (normalized) targets used for color coding.
struct EmbeddingSet {
  Matrix latent;
  Vector targets;
  std::vector<Index> ids;
  double beta = 0.0;
  Index latent_dim = 0;
  std::string model_hash;
};

/// `inputs` are normalized features; rows are numbered 0..N-1.
EmbeddingSet extract_embeddings(Model& model, const Matrix& inputs, const Vector& targets);
/// Embeds the given dataset rows (all rows when empty), normalizing with the
/// model's statistics.
EmbeddingSet extract_embeddings(Model& model, const LabeledDataset& data, const std::vector<Index>& rows = {});

struct Projection2D {
  Matrix coords;  // N x 2
  std::string method;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::uint64_t seed = 0;

  // PCA: fraction of total variance captured by each axis.
  std::vector<double> explained_variance;
  // t-SNE diagnostics.
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::vector<Index> unconverged_points;
};

/// Projects centered data onto the two leading covariance eigenvectors. Each
/// axis is signed so its largest-magnitude loading is positive.
Projection2D pca_project(const Matrix& data);

struct TsneParams {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  double entropy_tolerance = 1e-5;
  int max_search_steps = 200;
  std::uint64_t seed = 0;
};

inline constexpr Index kTsneMaxPoints = 5000;

/// Row-conditional affinities p_{j|i} whose entropy matches log2(perplexity).
/// Rows where the search hit its step cap are appended to `unconverged`.
Matrix conditional_affinities(const Matrix& data, double perplexity, double tolerance, int max_steps,
                              std::vector<Index>* unconverged = nullptr);

/// Entropy in bits of one affinity row (zero entries ignored).
double entropy_bits(const RowVector& row);

/// Exact t-SNE. Throws ConfigError unless 5 <= perplexity <= (N-1)/3 and N <= 5000.
Projection2D tsne_project(const Matrix& data, const TsneParams& params);

/// Mean silhouette coefficient with Euclidean distances.
double silhouette_score(const Matrix& points, const std::vector<int>& labels);

/// Writes `id,dim1,dim2,target_scaled` and a JSON sidecar with method,
/// hyperparameters, seed and the model checkpoint hash.
void write_projection(const Projection2D& proj, const EmbeddingSet& emb, const std::filesystem::path& csv_path);

struct CrossplotRow {
  double truth = 0.0;
  double pred_mean = 0.0;
  double pred_std = 0.0;
  std::string split;
};

/// Header `truth,pred_mean,pred_std,split`; values in shortest round-trip form.
void export_crossplot(const std::vector<CrossplotRow>& rows, const std::filesystem::path& path);
std::vector<CrossplotRow> read_crossplot(const std::filesystem::path& path);

}  // namespace bvr
