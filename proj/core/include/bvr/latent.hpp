#pragma once

#include "bvr/tensor.hpp"

namespace bvr {

/// Range applied to latent log-variances before exponentiation.
struct LogVarClamp {
  double min = -10.0;
  double max = 10.0;

  double apply(double lv) const noexcept { return lv < min ? min : (lv > max ? max : lv); }
  bool inside(double lv) const noexcept { return lv >= min && lv <= max; }
};

/// Diagonal Gaussian q(z|x) = N(mean, diag(exp(log_variance))).
struct MeanFieldPosterior {
  Vector mean;
  Vector log_variance;

  Index dim() const noexcept { return mean.size(); }
};

/// Correlated Gaussian q(z|x) = N(mean, L L^T) with L lower-triangular and a
/// strictly positive diagonal.
struct FullCovPosterior {
  Vector mean;
  Matrix chol_factor;

  Index dim() const noexcept { return mean.size(); }
};

struct LatentSample {
  Vector z;
  Vector noise_used;
};

/// -0.5 * sum_j (1 + log s_j^2 - mu_j^2 - s_j^2), against the N(0, I) prior.
double meanfield_kl(const MeanFieldPosterior& post, LogVarClamp clamp = {});

/// z = mean + exp(0.5 * log_variance) * noise
LatentSample meanfield_sample(const MeanFieldPosterior& post, const Vector& noise, LogVarClamp clamp = {});

/// 0.5 * (tr(L L^T) + mu^T mu - J - 2 sum log L_jj). Throws DomainError when
/// L has a non-positive diagonal entry or a nonzero entry above the diagonal.
double fullcov_kl(const FullCovPosterior& post);

/// z = mean + L * noise
LatentSample fullcov_sample(const FullCovPosterior& post, const Vector& noise);

/// Number of free entries in a JxJ lower-triangular factor.
constexpr Index tri_count(Index dim) noexcept { return dim * (dim + 1) / 2; }

/// Unconstrained vector (row-major lower triangle: (0,0), (1,0), (1,1), ...)
/// to a Cholesky factor. Off-diagonals are copied; diagonals become
/// softplus(raw) + 1e-6.
Matrix chol_parameterize(const Vector& raw, Index dim);

/// Pulls a gradient w.r.t. L back to the raw vector.
Vector chol_parameterize_backprop(const Vector& raw, Index dim, const Matrix& grad_chol);

// Gradients. Each returns d/d(parameters) of the named scalar or of
// <upstream, z> for the samplers.

struct MeanFieldGrads {
  Vector mean;
  Vector log_variance;
};

struct FullCovGrads {
  Vector mean;
  Matrix chol_factor;  // lower triangle only
};

MeanFieldGrads meanfield_kl_grad(const MeanFieldPosterior& post, LogVarClamp clamp = {});
MeanFieldGrads meanfield_sample_backprop(const MeanFieldPosterior& post, const Vector& noise,
                                         const Vector& upstream, LogVarClamp clamp = {});
FullCovGrads fullcov_kl_grad(const FullCovPosterior& post);
FullCovGrads fullcov_sample_backprop(const FullCovPosterior& post, const Vector& noise, const Vector& upstream);

}  // namespace bvr
