#include "bvr/latent.hpp"

#include <cmath>

#include "bvr/error.hpp"

namespace bvr {
namespace {

constexpr double kCholFloor = 1e-6;

void check_meanfield(const MeanFieldPosterior& p) {
  if (p.log_variance.size() != p.mean.size()) throw ShapeError("MeanFieldPosterior: mean/log_variance length mismatch");
}

void check_fullcov(const FullCovPosterior& p) {
  const Index j = p.mean.size();
  if (p.chol_factor.rows() != j || p.chol_factor.cols() != j) throw ShapeError("FullCovPosterior: factor must be JxJ");
  for (Index r = 0; r < j; ++r) {
    if (!(p.chol_factor(r, r) > 0.0)) throw DomainError("FullCovPosterior: non-positive Cholesky diagonal");
    for (Index c = r + 1; c < j; ++c) {
      if (p.chol_factor(r, c) != 0.0) throw DomainError("FullCovPosterior: factor is not lower-triangular");
    }
  }
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double meanfield_kl(const MeanFieldPosterior& post, LogVarClamp clamp) {
  check_meanfield(post);
  double sum = 0.0;
  for (Index j = 0; j < post.dim(); ++j) {
    const double lv = clamp.apply(post.log_variance[j]);
    const double mu = post.mean[j];
    sum += 1.0 + lv - mu * mu - std::exp(lv);
  }
  return -0.5 * sum;
}

LatentSample meanfield_sample(const MeanFieldPosterior& post, const Vector& noise, LogVarClamp clamp) {
  check_meanfield(post);
  if (noise.size() != post.dim()) throw ShapeError("meanfield_sample: noise length must equal latent dim");
  LatentSample s;
  s.noise_used = noise;
  s.z = post.mean;
  for (Index j = 0; j < post.dim(); ++j) s.z[j] += std::exp(0.5 * clamp.apply(post.log_variance[j])) * noise[j];
  return s;
}

double fullcov_kl(const FullCovPosterior& post) {
  check_fullcov(post);
  const Index j = post.dim();
  double log_det = 0.0;
  for (Index r = 0; r < j; ++r) log_det += std::log(post.chol_factor(r, r));
  return 0.5 * (post.chol_factor.squaredNorm() + post.mean.squaredNorm() - static_cast<double>(j) - 2.0 * log_det);
}

LatentSample fullcov_sample(const FullCovPosterior& post, const Vector& noise) {
  if (noise.size() != post.dim()) throw ShapeError("fullcov_sample: noise length must equal latent dim");
  if (post.chol_factor.rows() != post.dim() || post.chol_factor.cols() != post.dim()) {
    throw ShapeError("fullcov_sample: factor must be JxJ");
  }
  LatentSample s;
  s.noise_used = noise;
  s.z = post.mean + post.chol_factor.triangularView<Eigen::Lower>() * noise;
  return s;
}

Matrix chol_parameterize(const Vector& raw, Index dim) {
  if (raw.size() != tri_count(dim)) throw ShapeError("chol_parameterize: raw length must be J(J+1)/2");
  Matrix l = Matrix::Zero(dim, dim);
  Index k = 0;
  for (Index r = 0; r < dim; ++r) {
    for (Index c = 0; c < r; ++c) l(r, c) = raw[k++];
    l(r, r) = softplus(raw[k++]) + kCholFloor;
  }
  return l;
}

Vector chol_parameterize_backprop(const Vector& raw, Index dim, const Matrix& grad_chol) {
  if (raw.size() != tri_count(dim)) throw ShapeError("chol_parameterize_backprop: raw length must be J(J+1)/2");
  Vector g(raw.size());
  Index k = 0;
  for (Index r = 0; r < dim; ++r) {
    for (Index c = 0; c < r; ++c, ++k) g[k] = grad_chol(r, c);
    g[k] = grad_chol(r, r) * sigmoid(raw[k]);
    ++k;
  }
  return g;
}

MeanFieldGrads meanfield_kl_grad(const MeanFieldPosterior& post, LogVarClamp clamp) {
  check_meanfield(post);
  MeanFieldGrads g{post.mean, Vector(post.dim())};
  for (Index j = 0; j < post.dim(); ++j) {
    const double lv = post.log_variance[j];
    g.log_variance[j] = clamp.inside(lv) ? 0.5 * (std::exp(lv) - 1.0) : 0.0;
  }
  return g;
}

MeanFieldGrads meanfield_sample_backprop(const MeanFieldPosterior& post, const Vector& noise,
                                         const Vector& upstream, LogVarClamp clamp) {
  check_meanfield(post);
  MeanFieldGrads g{upstream, Vector(post.dim())};
  for (Index j = 0; j < post.dim(); ++j) {
    const double lv = post.log_variance[j];
    g.log_variance[j] = clamp.inside(lv) ? 0.5 * std::exp(0.5 * lv) * noise[j] * upstream[j] : 0.0;
  }
  return g;
}

FullCovGrads fullcov_kl_grad(const FullCovPosterior& post) {
  check_fullcov(post);
  FullCovGrads g{post.mean, post.chol_factor.triangularView<Eigen::Lower>()};
  for (Index r = 0; r < post.dim(); ++r) g.chol_factor(r, r) -= 1.0 / post.chol_factor(r, r);
  return g;
}

FullCovGrads fullcov_sample_backprop(const FullCovPosterior& post, const Vector& noise, const Vector& upstream) {
  if (noise.size() != post.dim() || upstream.size() != post.dim()) {
    throw ShapeError("fullcov_sample_backprop: vector lengths must equal latent dim");
  }
  return {upstream, Matrix((upstream * noise.transpose()).triangularView<Eigen::Lower>())};
}

}  // namespace bvr
