#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bvr/checkpoint.hpp"
#include "bvr/embedding.hpp"
#include "bvr/error.hpp"
#include "bvr/model.hpp"
#include "bvr/uncertainty.hpp"
#include "test_support.hpp"

using namespace bvr;
using bvr::test::tiny_config;

namespace {

Matrix pairwise(const Matrix& x) {
  Matrix d(x.rows(), x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.rows(); ++j) d(i, j) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

Matrix clusters(Index per, Index dim, double separation, Rng& rng, std::vector<int>& labels) {
  Matrix x(3 * per, dim);
  labels.clear();
  for (int c = 0; c < 3; ++c) {
    RowVector center = RowVector::Zero(dim);
    center[c % dim] = separation;
    for (Index i = 0; i < per; ++i) {
      RowVector noise(dim);
      rng.fill_normal(noise);
      x.row(c * per + i) = center + noise;
      labels.push_back(c);
    }
  }
  return x;
}

}  // namespace

TEST_SUITE("embedding-viz") {
  TEST_CASE("PCA on collinear data captures all variance in the first axis") {
    Rng rng(1);
    Matrix x(200, 3);
    const RowVector dir = (RowVector(3) << 1.0, -2.0, 0.5).finished().normalized();
    for (Index i = 0; i < 200; ++i) x.row(i) = rng.normal() * 4.0 * dir + RowVector::Constant(3, 7.0);
    const Projection2D p = pca_project(x);
    REQUIRE(p.explained_variance.size() == 2);
    CHECK(p.explained_variance[0] > 0.9999);
    CHECK(p.explained_variance[0] >= p.explained_variance[1]);
    CHECK(p.coords.rows() == 200);
    CHECK(p.method == "pca");
  }

  TEST_CASE("PCA of 2-D data preserves pairwise distances") {
    Rng rng(2);
    Matrix x(60, 2);
    for (Index i = 0; i < 60; ++i) x.row(i) << 3.0 * rng.normal(), 0.5 * rng.normal();
    const Projection2D p = pca_project(x);
    CHECK((pairwise(p.coords) - pairwise(x)).cwiseAbs().maxCoeff() < 1e-9);
  }

  TEST_CASE("PCA sign convention is fixed") {
    Rng rng(3);
    Matrix x = test::random_matrix(50, 4, rng);
    x.col(1) *= 3.0;
    const Projection2D a = pca_project(x);
    const Projection2D b = pca_project(x);
    CHECK(a.coords == b.coords);
    const Projection2D c = pca_project(-x);
    CHECK((c.coords + a.coords).cwiseAbs().maxCoeff() < 1e-9);
    CHECK_THROWS_AS(pca_project(x.topRows(2)), DataError);
  }

  TEST_CASE("affinity rows hit the target entropy") {
    Rng rng(4);
    const Matrix x = test::random_matrix(120, 5, rng);
    std::vector<Index> unconverged;
    const Matrix p = conditional_affinities(x, 20.0, 1e-5, 200, &unconverged);
    for (Index i = 0; i < p.rows(); ++i) {
      const bool flagged = std::find(unconverged.begin(), unconverged.end(), i) != unconverged.end();
      if (!flagged) CHECK(std::abs(entropy_bits(p.row(i)) - std::log2(20.0)) < 1e-5);
      CHECK(p(i, i) == 0.0);
      CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(unconverged.empty());
  }

  TEST_CASE("t-SNE separates clusters, lowers KL and keeps duplicate points together") {
    Rng rng(5);
    std::vector<int> labels;
    Matrix x = clusters(100, 10, 12.0, rng, labels);
    x.row(1) = x.row(0);
    TsneParams params;
    params.seed = 3;
    const Projection2D p = tsne_project(x, params);
    CHECK(p.final_kl < p.initial_kl);
    CHECK(silhouette_score(p.coords, labels) > 0.5);
    CHECK(p.unconverged_points.empty());
    const double scale = (p.coords.rowwise() - p.coords.colwise().mean()).rowwise().norm().maxCoeff();
    CHECK((p.coords.row(0) - p.coords.row(1)).norm() < 1e-3 * scale);
    const Projection2D again = tsne_project(x, params);
    CHECK(p.coords == again.coords);
  }

  TEST_CASE("t-SNE rejects infeasible perplexity") {
    Rng rng(7);
    const Matrix x = test::random_matrix(30, 3, rng);
    TsneParams params;
    params.perplexity = 10.0;  // (30 - 1) / 3 < 10
    CHECK_THROWS_AS(tsne_project(x, params), ConfigError);
    params.perplexity = 4.0;
    CHECK_THROWS_AS(tsne_project(x, params), ConfigError);
  }

  TEST_CASE("silhouette of well separated labels") {
    Matrix pts(4, 2);
    pts << 0, 0, 0, 1, 100, 0, 100, 1;
    CHECK(silhouette_score(pts, {0, 0, 1, 1}) > 0.98);
  }

  TEST_CASE("crossplot export round trips and recomputes metrics") {
    std::vector<CrossplotRow> rows{{1.0, 1.1, 0.2, "holdout"}, {2.0, 1.7, 0.3, "holdout"}, {0.1 + 0.2, 3.3, 1e-17, "train"}};
    test::TempDir dir;
    export_crossplot(rows, dir / "x.csv");
    const std::string text = test::slurp(dir / "x.csv");
    CHECK(text.rfind("truth,pred_mean,pred_std,split\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);

    const auto back = read_crossplot(dir / "x.csv");
    REQUIRE(back.size() == 3);
    Vector y(3), yh(3), y2(3), yh2(3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].truth == rows[i].truth);
      CHECK(back[i].pred_mean == rows[i].pred_mean);
      CHECK(back[i].pred_std == rows[i].pred_std);
      CHECK(back[i].split == rows[i].split);
      y[static_cast<Index>(i)] = rows[i].truth;
      yh[static_cast<Index>(i)] = rows[i].pred_mean;
      y2[static_cast<Index>(i)] = back[i].truth;
      yh2[static_cast<Index>(i)] = back[i].pred_mean;
    }
    CHECK(mse(y, yh) == mse(y2, yh2));
    CHECK(r2_score(y, yh) == r2_score(y2, yh2));
  }

  TEST_CASE("embeddings: shape, duplicate rows and checkpoint round trip") {
    for (Index latent : {Index{3}, Index{6}}) {
      ModelConfig c = tiny_config(latent);
      Model m = Model::build(c);
      m.set_trained(true);
      Rng rng(8);
      Matrix x = test::random_matrix(10, 5, rng);
      x.row(4) = x.row(7);
      const Vector y = x.col(0);
      const EmbeddingSet e = extract_embeddings(m, x, y);
      CHECK(e.latent.rows() == 10);
      CHECK(e.latent.cols() == latent);
      CHECK(e.latent_dim == latent);
      CHECK(e.latent.row(4) == e.latent.row(7));

      test::TempDir dir;
      save_model(m, dir / "m.ckpt");
      Model loaded = load_model(dir / "m.ckpt");
      CHECK(extract_embeddings(loaded, x, y).latent == e.latent);
    }
  }

  TEST_CASE("projection CSV and sidecar") {
    Model m = Model::build(tiny_config(3));
    m.set_trained(true);
    Rng rng(9);
    const Matrix x = test::random_matrix(12, 5, rng);
    EmbeddingSet e = extract_embeddings(m, x, x.col(1));
    e.model_hash = "abc";
    const Projection2D p = pca_project(e.latent);
    test::TempDir dir;
    write_projection(p, e, dir / "proj.csv");
    const std::string text = test::slurp(dir / "proj.csv");
    CHECK(text.rfind("id,dim1,dim2,target_scaled\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 13);
    const auto side = nlohmann::json::parse(test::slurp(dir / "proj.json"));
    CHECK(side.at("method") == "pca");
    CHECK(side.at("model_hash") == "abc");
    CHECK(side.at("latent_dim") == 3);
  }
}
