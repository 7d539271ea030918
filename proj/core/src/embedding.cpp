#include "bvr/embedding.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bvr/dataset.hpp"
#include "bvr/error.hpp"
#include "bvr/model.hpp"

namespace bvr {

EmbeddingSet extract_embeddings(Model& model, const Matrix& inputs, const Vector& targets) {
  if (targets.size() != inputs.rows()) throw ShapeError("extract_embeddings: targets do not match inputs");
  EmbeddingSet emb;
  emb.latent = model.embed(inputs);
  if (!all_finite(emb.latent)) throw NumericError("extract_embeddings: non-finite latent means");
  emb.targets = targets;
  emb.ids.resize(static_cast<std::size_t>(inputs.rows()));
  std::iota(emb.ids.begin(), emb.ids.end(), Index{0});
  emb.beta = model.config().beta;
  emb.latent_dim = model.config().latent_dim;
  return emb;
}

EmbeddingSet extract_embeddings(Model& model, const LabeledDataset& data, const std::vector<Index>& rows) {
  if (!model.normalization()) throw ConfigError("extract_embeddings: model has no normalization statistics");
  std::vector<Index> selected = rows;
  if (selected.empty()) {
    selected.resize(static_cast<std::size_t>(data.size()));
    std::iota(selected.begin(), selected.end(), Index{0});
  }
  const NormStats& norm = *model.normalization();
  EmbeddingSet emb = extract_embeddings(model, norm.normalize(data.features_of(selected)),
                                        norm.normalize_targets(data.targets_of(selected)));
  emb.ids = selected;
  return emb;
}

Projection2D pca_project(const Matrix& data) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (n <= 2) throw DataError("pca_project: need more than two rows");
  if (!all_finite(data)) throw DataError("pca_project: non-finite input");

  const RowVector mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::VectorXd& values = solver.eigenvalues();
  const double total = std::max(values.sum(), 0.0);

  Projection2D proj;
  proj.method = "pca";
  proj.coords = Matrix::Zero(n, 2);
  for (Index k = 0; k < 2; ++k) {
    const Index col = d - 1 - k;
    if (col < 0) {
      proj.explained_variance.push_back(0.0);
      continue;
    }
    Eigen::VectorXd axis = solver.eigenvectors().col(col);
    Index lead = 0;
    axis.cwiseAbs().maxCoeff(&lead);
    if (axis[lead] < 0.0) axis = -axis;
    proj.coords.col(k) = centered * axis;
    const double lambda = std::max(values[col], 0.0);
    proj.explained_variance.push_back(total > 0.0 ? lambda / total : 0.0);
  }
  return proj;
}

double entropy_bits(const RowVector& row) {
  double h = 0.0;
  for (Index j = 0; j < row.size(); ++j) {
    if (row[j] > 0.0) h -= row[j] * std::log2(row[j]);
  }
  return h;
}

namespace {

Matrix squared_distances(const Matrix& x) {
  const Vector sq = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * (x * x.transpose())).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

// Fills `row` with exp(-precision * (d - d_min)) normalized, returns entropy in bits.
double affinity_row(const Matrix& dist, Index i, double precision, RowVector& row) {
  const Index n = dist.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) {
    if (j != i) dmin = std::min(dmin, dist(i, j));
  }
  double sum = 0.0;
  double weighted = 0.0;
  for (Index j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    const double shifted = dist(i, j) - dmin;
    row[j] = std::exp(-precision * shifted);
    sum += row[j];
    weighted += shifted * row[j];
  }
  row /= sum;
  return (std::log(sum) + precision * weighted / sum) / std::numbers::ln2;
}

}  // namespace

Matrix conditional_affinities(const Matrix& data, double perplexity, double tolerance, int max_steps,
                              std::vector<Index>* unconverged) {
  const Index n = data.rows();
  const Matrix dist = squared_distances(data);
  const double target = std::log2(perplexity);
  Matrix p(n, n);
  RowVector row(n);
  for (Index i = 0; i < n; ++i) {
    double precision = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int step = 0; step < max_steps; ++step) {
      const double h = affinity_row(dist, i, precision, row);
      if (std::abs(h - target) < tolerance) {
        converged = true;
        break;
      }
      if (h > target) {
        lo = precision;
        precision = std::isinf(hi) ? precision * 2.0 : 0.5 * (precision + hi);
      } else {
        hi = precision;
        precision = 0.5 * (precision + lo);
      }
    }
    if (!converged && unconverged != nullptr) unconverged->push_back(i);
    p.row(i) = row;
  }
  return p;
}

Projection2D tsne_project(const Matrix& data, const TsneParams& params) {
  const Index n = data.rows();
  if (n > kTsneMaxPoints) {
    throw ConfigError("tsne_project: " + std::to_string(n) + " points exceeds the exact-method cap of " +
                      std::to_string(kTsneMaxPoints) + "; subsample first");
  }
  const double max_perplexity = static_cast<double>(n - 1) / 3.0;
  if (!(params.perplexity >= 5.0 && params.perplexity <= max_perplexity)) {
    throw ConfigError("tsne_project: perplexity " + std::to_string(params.perplexity) + " is infeasible for " +
                      std::to_string(n) + " points (allowed [5, " + std::to_string(max_perplexity) + "])");
  }
  if (params.iterations < 0) throw ConfigError("tsne_project: iterations must be >= 0");
  if (!all_finite(data)) throw DataError("tsne_project: non-finite input");

  Projection2D proj;
  proj.method = "tsne";
  proj.seed = params.seed;
  proj.hyperparameters = {{"perplexity", params.perplexity},
                          {"iterations", params.iterations},
                          {"learning_rate", params.learning_rate},
                          {"early_exaggeration", params.early_exaggeration},
                          {"exaggeration_iterations", params.exaggeration_iterations},
                          {"initial_momentum", params.initial_momentum},
                          {"final_momentum", params.final_momentum},
                          {"momentum_switch", params.momentum_switch}};

  Matrix p = conditional_affinities(data, params.perplexity, params.entropy_tolerance, params.max_search_steps,
                                    &proj.unconverged_points);
  p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(params.seed);
  Matrix y(n, 2);
  rng.fill_normal(y);
  y *= 1e-4;
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix grad(n, 2);
  Matrix num(n, n);

  auto kernel = [&]() {
    num = (1.0 + squared_distances(y).array()).inverse().matrix();
    num.diagonal().setZero();
    return num.sum();
  };
  auto kl = [&]() {
    const double z = kernel();
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i != j) total += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / z, 1e-300));
      }
    }
    return total;
  };

  proj.initial_kl = kl();
  for (int it = 0; it < params.iterations; ++it) {
    const double exaggeration = it < params.exaggeration_iterations ? params.early_exaggeration : 1.0;
    const double momentum = it < params.momentum_switch ? params.initial_momentum : params.final_momentum;
    const double z = kernel();
    const Matrix force = ((exaggeration * p).array() - num.array() / z).matrix().cwiseProduct(num);
    grad = 4.0 * (force.rowwise().sum().asDiagonal() * y - force * y);
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < 2; ++k) {
        const bool same = (grad(i, k) > 0.0) == (velocity(i, k) > 0.0);
        gains(i, k) = same ? std::max(gains(i, k) * 0.8, 0.01) : gains(i, k) + 0.2;
      }
    }
    velocity = momentum * velocity - params.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  proj.final_kl = kl();
  if (!all_finite(y)) throw NumericError("tsne_project: coordinates diverged");
  proj.coords = std::move(y);
  return proj;
}

double silhouette_score(const Matrix& points, const std::vector<int>& labels) {
  const Index n = points.rows();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("silhouette_score: labels do not match points");
  if (n < 2) throw DataError("silhouette_score: need at least two points");
  std::vector<int> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw DataError("silhouette_score: need at least two clusters");

  const Matrix dist = squared_distances(points).cwiseSqrt();
  double total = 0.0;
  std::vector<double> sums(classes.size());
  std::vector<Index> counts(classes.size());
  for (Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    std::size_t own = 0;
    for (Index j = 0; j < n; ++j) {
      const auto c = static_cast<std::size_t>(
          std::lower_bound(classes.begin(), classes.end(), labels[static_cast<std::size_t>(j)]) - classes.begin());
      if (j == i) {
        own = c;
        continue;
      }
      sums[c] += dist(i, j);
      ++counts[c];
    }
    if (counts[own] == 0) continue;
    const double a = sums[own] / static_cast<double>(counts[own]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (c != own && counts[c] > 0) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

void write_projection(const Projection2D& proj, const EmbeddingSet& emb, const std::filesystem::path& csv_path) {
  if (proj.coords.rows() != emb.latent.rows()) throw ShapeError("write_projection: projection and embedding differ");
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + csv_path.string());
  out << "id,dim1,dim2,target_scaled\n";
  for (Index i = 0; i < proj.coords.rows(); ++i) {
    out << emb.ids[static_cast<std::size_t>(i)] << ',' << format_double(proj.coords(i, 0)) << ','
        << format_double(proj.coords(i, 1)) << ',' << format_double(emb.targets[i]) << '\n';
  }
  if (!out) throw DataError("write failed for " + csv_path.string());

  nlohmann::json meta{{"format_version", 1},
                      {"method", proj.method},
                      {"hyperparameters", proj.hyperparameters},
                      {"seed", proj.seed},
                      {"model_hash", emb.model_hash},
                      {"beta", emb.beta},
                      {"latent_dim", emb.latent_dim},
                      {"points", proj.coords.rows()}};
  if (proj.method == "pca") meta["explained_variance"] = proj.explained_variance;
  if (proj.method == "tsne") {
    meta["initial_kl"] = proj.initial_kl;
    meta["final_kl"] = proj.final_kl;
    meta["unconverged_points"] = proj.unconverged_points;
  }
  std::ofstream side(sidecar_path(csv_path), std::ios::binary);
  if (!side) throw DataError("cannot write " + sidecar_path(csv_path).string());
  side << meta.dump(2) << '\n';
}

void export_crossplot(const std::vector<CrossplotRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw DataError("export_crossplot: no rows");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "truth,pred_mean,pred_std,split\n";
  for (const auto& r : rows) {
    out << format_double(r.truth) << ',' << format_double(r.pred_mean) << ',' << format_double(r.pred_std) << ','
        << r.split << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<CrossplotRow> read_crossplot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "truth,pred_mean,pred_std,split") {
    throw DataError(path.string() + ": unexpected crossplot header");
  }
  std::vector<CrossplotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a;
    std::string b;
    std::string c;
    CrossplotRow r;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') ||
        !std::getline(ss, r.split)) {
      throw DataError(path.string() + ": malformed crossplot row '" + line + "'");
    }
    r.truth = parse_double(a);
    r.pred_mean = parse_double(b);
    r.pred_std = parse_double(c);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace bvr
