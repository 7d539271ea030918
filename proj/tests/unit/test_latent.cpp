#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bvr/error.hpp"
#include "bvr/latent.hpp"
#include "test_support.hpp"

using namespace bvr;

namespace {

MeanFieldPosterior meanfield(std::initializer_list<double> mu, std::initializer_list<double> lv) {
  MeanFieldPosterior p;
  p.mean = Eigen::Map<const Vector>(mu.begin(), static_cast<Index>(mu.size()));
  p.log_variance = Eigen::Map<const Vector>(lv.begin(), static_cast<Index>(lv.size()));
  return p;
}

FullCovPosterior random_fullcov(Index dim, Rng& rng) {
  FullCovPosterior p;
  p.mean = test::random_vector(dim, rng, 0.8);
  Vector raw = test::random_vector(tri_count(dim), rng, 0.6);
  p.chol_factor = chol_parameterize(raw, dim);
  return p;
}

// Central differences of a scalar function over a vector argument.
template <class F>
Vector numeric_grad(Vector x, F f, double h = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel(const Vector& a, const Vector& n) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), 1e-4}));
  }
  return worst;
}

Vector lower_entries(const Matrix& m) {
  Vector v(tri_count(m.rows()));
  Index k = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j <= i; ++j) v[k++] = m(i, j);
  }
  return v;
}

Matrix from_lower(const Vector& v, Index dim) {
  Matrix m = Matrix::Zero(dim, dim);
  Index k = 0;
  for (Index i = 0; i < dim; ++i) {
    for (Index j = 0; j <= i; ++j) m(i, j) = v[k++];
  }
  return m;
}

}  // namespace

TEST_SUITE("latent-heads") {
  TEST_CASE("mean-field KL closed form") {
    CHECK(meanfield_kl(meanfield({0.0}, {0.0})) == 0.0);
    CHECK(meanfield_kl(meanfield({1.0}, {0.0})) == 0.5);
    CHECK(meanfield_kl(meanfield({0.0}, {1.0})) == doctest::Approx(0.5 * (std::numbers::e - 2.0)).epsilon(1e-15));
    CHECK(meanfield_kl(meanfield({0.0}, {1.0})) == doctest::Approx(0.35914).epsilon(1e-5));

    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
      MeanFieldPosterior p;
      p.mean = test::random_vector(4, rng, 2.0);
      p.log_variance = test::random_vector(4, rng, 2.0);
      CHECK(meanfield_kl(p) >= 0.0);
    }
  }

  TEST_CASE("mean-field sampling") {
    const MeanFieldPosterior p = meanfield({0.3, -1.2}, {0.4, -0.8});
    CHECK(meanfield_sample(p, Vector::Zero(2)).z == p.mean);

    LogVarClamp floor_clamp;
    floor_clamp.min = -1500.0;
    const MeanFieldPosterior collapsed = meanfield({0.3, -1.2}, {-2000.0, -2000.0});
    Vector noise(2);
    noise << 2.5, -7.0;
    CHECK(meanfield_sample(collapsed, noise, floor_clamp).z == collapsed.mean);
    CHECK(meanfield_sample(p, noise).noise_used == noise);

    Rng rng(2);
    const int n = 100000;
    Vector sum = Vector::Zero(2);
    Vector sq = Vector::Zero(2);
    Vector eps(2);
    for (int t = 0; t < n; ++t) {
      eps << rng.normal(), rng.normal();
      const Vector z = meanfield_sample(p, eps).z;
      sum += z;
      sq += z.cwiseProduct(z);
    }
    for (Index j = 0; j < 2; ++j) {
      const double var = std::exp(p.log_variance[j]);
      const double mean = sum[j] / n;
      const double sample_var = (sq[j] - n * mean * mean) / (n - 1);
      CHECK(std::abs(mean - p.mean[j]) < 3.0 * std::sqrt(var / n));
      CHECK(std::abs(sample_var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
    }
  }

  TEST_CASE("full-covariance KL") {
    FullCovPosterior prior;
    prior.mean = Vector::Zero(3);
    prior.chol_factor = Matrix::Identity(3, 3);
    CHECK(fullcov_kl(prior) == 0.0);

    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
      MeanFieldPosterior mf;
      mf.mean = test::random_vector(3, rng);
      mf.log_variance = test::random_vector(3, rng);
      FullCovPosterior fc;
      fc.mean = mf.mean;
      fc.chol_factor = mf.log_variance.unaryExpr([](double lv) { return std::exp(0.5 * lv); }).asDiagonal();
      CHECK(std::abs(fullcov_kl(fc) - meanfield_kl(mf)) < 1e-12);
      CHECK(fullcov_kl(random_fullcov(3, rng)) >= 0.0);
    }

    FullCovPosterior bad = prior;
    bad.chol_factor(1, 1) = 0.0;
    CHECK_THROWS_AS(fullcov_kl(bad), DomainError);
    bad.chol_factor(1, 1) = -0.5;
    CHECK_THROWS_AS(fullcov_kl(bad), DomainError);
  }

  TEST_CASE("full-covariance KL matches a Monte Carlo estimate") {
    Rng rng(4);
    for (int t = 0; t < 3; ++t) {
      const FullCovPosterior p = random_fullcov(3, rng);
      const double log_det = p.chol_factor.diagonal().array().log().sum();
      const int n = 100000;
      double sum = 0.0;
      double sq = 0.0;
      Vector eps(3);
      for (int s = 0; s < n; ++s) {
        for (Index j = 0; j < 3; ++j) eps[j] = rng.normal();
        const Vector z = fullcov_sample(p, eps).z;
        // log q(z) - log p(z) with z = mu + L eps
        const double ratio = -log_det - 0.5 * eps.squaredNorm() + 0.5 * z.squaredNorm();
        sum += ratio;
        sq += ratio * ratio;
      }
      const double mean = sum / n;
      const double se = std::sqrt((sq / n - mean * mean) / n);
      CHECK(std::abs(mean - fullcov_kl(p)) < 3.0 * se);
    }
  }

  TEST_CASE("full-covariance sampling") {
    Rng rng(5);
    const FullCovPosterior p = random_fullcov(3, rng);
    CHECK(fullcov_sample(p, Vector::Zero(3)).z == p.mean);

    FullCovPosterior unit;
    unit.mean = p.mean;
    unit.chol_factor = Matrix::Identity(3, 3);
    MeanFieldPosterior mf;
    mf.mean = p.mean;
    mf.log_variance = Vector::Zero(3);
    const Vector noise = test::random_vector(3, rng);
    CHECK(fullcov_sample(unit, noise).z == meanfield_sample(mf, noise).z);

    const int n = 100000;
    const Matrix sigma = p.chol_factor * p.chol_factor.transpose();
    Matrix samples(n, 3);
    Vector eps(3);
    for (int s = 0; s < n; ++s) {
      for (Index j = 0; j < 3; ++j) eps[j] = rng.normal();
      samples.row(s) = fullcov_sample(p, eps).z.transpose();
    }
    const RowVector mean = samples.colwise().mean();
    const Matrix centered = samples.rowwise() - mean;
    const Matrix cov = centered.transpose() * centered / (n - 1);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 3; ++j) {
        const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
        CHECK(std::abs(cov(i, j) - sigma(i, j)) < 3.0 * se);
      }
    }
  }

  TEST_CASE("Cholesky parameterization") {
    const Matrix l0 = chol_parameterize(Vector::Zero(6), 3);
    for (Index i = 0; i < 3; ++i) {
      CHECK(l0(i, i) == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-15));
      for (Index j = 0; j < 3; ++j) {
        if (j != i) CHECK(l0(i, j) == 0.0);
      }
    }

    Vector very_negative = Vector::Constant(3, -800.0);
    const Matrix floor = chol_parameterize(very_negative, 2);
    CHECK(floor(0, 0) > 0.0);
    CHECK(floor(0, 0) == doctest::Approx(1e-6).epsilon(1e-9));
    CHECK(floor(1, 1) == doctest::Approx(1e-6).epsilon(1e-9));
    CHECK(floor(1, 0) == -800.0);

    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
      const Matrix l = chol_parameterize(test::random_vector(10, rng, 3.0), 4);
      CHECK(l.isLowerTriangular(0.0));
      CHECK((l.diagonal().array() > 0.0).all());
    }
    CHECK_THROWS(chol_parameterize(Vector::Zero(5), 3));
  }

  TEST_CASE("latent head gradients match finite differences") {
    Rng rng(7);
    for (int t = 0; t < 10; ++t) {
      MeanFieldPosterior p;
      p.mean = test::random_vector(3, rng);
      p.log_variance = test::random_vector(3, rng);
      const MeanFieldGrads kg = meanfield_kl_grad(p);
      CHECK(max_rel(kg.mean, numeric_grad(p.mean, [&](const Vector& m) {
              MeanFieldPosterior q = p;
              q.mean = m;
              return meanfield_kl(q);
            })) < 1e-4);
      CHECK(max_rel(kg.log_variance, numeric_grad(p.log_variance, [&](const Vector& lv) {
              MeanFieldPosterior q = p;
              q.log_variance = lv;
              return meanfield_kl(q);
            })) < 1e-4);

      const Vector noise = test::random_vector(3, rng);
      const Vector up = test::random_vector(3, rng);
      const MeanFieldGrads sg = meanfield_sample_backprop(p, noise, up);
      CHECK(max_rel(sg.mean, numeric_grad(p.mean, [&](const Vector& m) {
              MeanFieldPosterior q = p;
              q.mean = m;
              return up.dot(meanfield_sample(q, noise).z);
            })) < 1e-4);
      CHECK(max_rel(sg.log_variance, numeric_grad(p.log_variance, [&](const Vector& lv) {
              MeanFieldPosterior q = p;
              q.log_variance = lv;
              return up.dot(meanfield_sample(q, noise).z);
            })) < 1e-4);

      const FullCovPosterior f = random_fullcov(3, rng);
      const FullCovGrads fk = fullcov_kl_grad(f);
      CHECK(max_rel(fk.mean, numeric_grad(f.mean, [&](const Vector& m) {
              FullCovPosterior q = f;
              q.mean = m;
              return fullcov_kl(q);
            })) < 1e-4);
      CHECK(max_rel(lower_entries(fk.chol_factor), numeric_grad(lower_entries(f.chol_factor), [&](const Vector& v) {
              FullCovPosterior q = f;
              q.chol_factor = from_lower(v, 3);
              return fullcov_kl(q);
            })) < 1e-4);

      const FullCovGrads fs = fullcov_sample_backprop(f, noise, up);
      CHECK(max_rel(lower_entries(fs.chol_factor), numeric_grad(lower_entries(f.chol_factor), [&](const Vector& v) {
              FullCovPosterior q = f;
              q.chol_factor = from_lower(v, 3);
              return up.dot(fullcov_sample(q, noise).z);
            })) < 1e-4);
      CHECK(max_rel(fs.mean, up) < 1e-15);

      const Vector raw = test::random_vector(6, rng);
      const Matrix weights = test::random_matrix(3, 3, rng);
      const Vector rg = chol_parameterize_backprop(raw, 3, weights.triangularView<Eigen::Lower>().toDenseMatrix());
      CHECK(max_rel(rg, numeric_grad(raw, [&](const Vector& r) {
              return chol_parameterize(r, 3).cwiseProduct(weights).sum();
            })) < 1e-4);
    }
  }

  TEST_CASE("sampling is a deterministic function of parameters and noise") {
    Rng rng(8);
    const FullCovPosterior f = random_fullcov(4, rng);
    const Vector noise = test::random_vector(4, rng);
    CHECK(fullcov_sample(f, noise).z == fullcov_sample(f, noise).z);
  }
}
