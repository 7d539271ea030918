#include "bvr/nn.hpp"

#include <cmath>
#include <string>

#include "bvr/error.hpp"

namespace bvr {

DenseParams DenseParams::zeros(Index in, Index out) {
  return {Matrix::Zero(in, out), RowVector::Zero(out)};
}

DenseParams DenseParams::he_uniform(Index in, Index out, Rng& rng) {
  if (in < 1 || out < 1) throw ConfigError("dense layer widths must be >= 1");
  DenseParams p = zeros(in, out);
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  for (Index i = 0; i < p.weights.size(); ++i) p.weights.data()[i] = rng.uniform(-limit, limit);
  return p;
}

Matrix dense_apply(const Matrix& input, const DenseParams& params) {
  if (input.cols() != params.weights.rows() || params.bias.size() != params.weights.cols()) {
    throw ShapeError("dense_apply: input has " + std::to_string(input.cols()) + " columns, weights are " +
                     std::to_string(params.weights.rows()) + "x" + std::to_string(params.weights.cols()));
  }
  Matrix out = input * params.weights;
  out.rowwise() += params.bias;
  return out;
}

DenseGrads dense_backprop(const Matrix& input, const DenseParams& params, const Matrix& upstream) {
  if (input.cols() != params.weights.rows() || upstream.rows() != input.rows() ||
      upstream.cols() != params.weights.cols()) {
    throw ShapeError("dense_backprop: inconsistent shapes");
  }
  DenseGrads g;
  g.input = upstream * params.weights.transpose();
  g.params.weights = input.transpose() * upstream;
  g.params.bias = upstream.colwise().sum();
  return g;
}

BatchNormParams BatchNormParams::identity(Index width) {
  BatchNormParams p;
  p.scale = RowVector::Ones(width);
  p.shift = RowVector::Zero(width);
  p.running_mean = RowVector::Zero(width);
  p.running_var = RowVector::Ones(width);
  return p;
}

Matrix batchnorm_apply(const Matrix& input, BatchNormParams& params, Mode mode, BatchNormCache* cache) {
  if (input.cols() != params.width()) throw ShapeError("batchnorm_apply: width mismatch");
  if (!(params.epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
  const Index n = input.rows();

  RowVector mean;
  RowVector var;
  if (mode == Mode::train) {
    if (n < 2) throw DataError("batchnorm_apply: train mode needs a batch of at least 2 rows");
    mean = input.colwise().mean();
    var = (input.rowwise() - mean).array().square().colwise().mean();
    const double m = params.momentum;
    const double unbiased = static_cast<double>(n) / static_cast<double>(n - 1);
    params.running_mean = m * params.running_mean + (1.0 - m) * mean;
    params.running_var = m * params.running_var + (1.0 - m) * unbiased * var;
  } else {
    mean = params.running_mean;
    var = params.running_var;
  }

  const RowVector inv_std = (var.array() + params.epsilon).rsqrt().matrix();
  Matrix normalized = (input.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = normalized.array().rowwise() * params.scale.array();
  out.rowwise() += params.shift;
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = inv_std;
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batchnorm_backprop(const Matrix& upstream, const BatchNormParams& params,
                                  const BatchNormCache& cache) {
  if (upstream.rows() != cache.normalized.rows() || upstream.cols() != cache.normalized.cols()) {
    throw ShapeError("batchnorm_backprop: upstream does not match cached forward pass");
  }
  BatchNormGrads g;
  g.shift = upstream.colwise().sum();
  g.scale = upstream.cwiseProduct(cache.normalized).colwise().sum();

  const Matrix dnorm = upstream.array().rowwise() * params.scale.array();
  if (cache.mode == Mode::infer) {
    g.input = dnorm.array().rowwise() * cache.inv_std.array();
    return g;
  }
  // dx = inv_std / n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
  const double n = static_cast<double>(upstream.rows());
  const RowVector sum_d = dnorm.colwise().sum();
  const RowVector sum_dx = dnorm.cwiseProduct(cache.normalized).colwise().sum();
  Matrix centered = (n * dnorm).rowwise() - sum_d;
  centered -= (cache.normalized.array().rowwise() * sum_dx.array()).matrix();
  g.input = centered.array().rowwise() * (cache.inv_std.array() / n);
  return g;
}

Matrix leaky_relu(const Matrix& input, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu slope must be in (0, 1)");
  return input.unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
}

Matrix leaky_relu_backprop(const Matrix& input, const Matrix& upstream, double slope) {
  if (input.rows() != upstream.rows() || input.cols() != upstream.cols()) {
    throw ShapeError("leaky_relu_backprop: shape mismatch");
  }
  return upstream.binaryExpr(input, [slope](double g, double x) { return x >= 0.0 ? g : slope * g; });
}

DropoutResult dropout_apply(const Matrix& input, double rate, bool active, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  DropoutResult r;
  if (!active || rate == 0.0) {
    r.output = input;
    r.mask = Matrix::Ones(input.rows(), input.cols());
    return r;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  r.mask.resize(input.rows(), input.cols());
  for (Index i = 0; i < r.mask.size(); ++i) r.mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  r.output = input.cwiseProduct(r.mask);
  return r;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (params.size() != grads.size() || static_cast<Index>(params.size()) != state.first_moment.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  if (!all_finite(grads)) throw NumericError("adam_step: non-finite gradient");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[static_cast<Index>(i)];
    double& v = state.second_moment[static_cast<Index>(i)];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

}  // namespace bvr
