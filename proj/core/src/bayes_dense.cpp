#include "bvr/bayes_dense.hpp"

#include <algorithm>
#include <cmath>

#include "bvr/error.hpp"
#include "bvr/nn.hpp"

namespace bvr {
namespace {

double clamp_log_var(double lv) { return std::clamp(lv, kWeightLogVarMin, kWeightLogVarMax); }

bool in_clamp(double lv) { return lv >= kWeightLogVarMin && lv <= kWeightLogVarMax; }

// KL(N(m, e^lv) || N(0, p^2)) = log p - lv/2 + (e^lv + m^2) / (2 p^2) - 1/2
double scalar_kl(double m, double lv, double prior_var, double log_prior_std) {
  const double c = clamp_log_var(lv);
  return log_prior_std - 0.5 * c + (std::exp(c) + m * m) / (2.0 * prior_var) - 0.5;
}

void check_shapes(const VarDenseParams& p) {
  if (p.weight_log_var.rows() != p.weight_mean.rows() || p.weight_log_var.cols() != p.weight_mean.cols() ||
      p.bias_mean.size() != p.weight_mean.cols() || p.bias_log_var.size() != p.weight_mean.cols()) {
    throw ShapeError("VarDenseParams: inconsistent parameter shapes");
  }
  if (!(p.prior_std > 0.0)) throw ConfigError("VarDenseParams: prior_std must be positive");
}

Matrix weight_std(const VarDenseParams& p) {
  return p.weight_log_var.unaryExpr([](double lv) { return std::exp(0.5 * clamp_log_var(lv)); });
}

RowVector bias_std(const VarDenseParams& p) {
  return p.bias_log_var.unaryExpr([](double lv) { return std::exp(0.5 * clamp_log_var(lv)); });
}

}  // namespace

VarDenseParams VarDenseParams::init(Index in, Index out, Rng& rng, double log_var, double prior_std) {
  const DenseParams det = DenseParams::he_uniform(in, out, rng);
  VarDenseParams p;
  p.weight_mean = det.weights;
  p.weight_log_var = Matrix::Constant(in, out, log_var);
  p.bias_mean = det.bias;
  p.bias_log_var = RowVector::Constant(out, log_var);
  p.prior_std = prior_std;
  return p;
}

VarDenseNoise VarDenseNoise::zeros(Index in, Index out) { return {Matrix::Zero(in, out), RowVector::Zero(out)}; }

VarDenseNoise VarDenseNoise::draw(Index in, Index out, Rng& rng) {
  VarDenseNoise n{Matrix(in, out), RowVector(out)};
  rng.fill_normal(n.weight);
  rng.fill_normal(n.bias);
  return n;
}

Matrix vardense_apply(const Matrix& input, const VarDenseParams& params, const VarDenseNoise& noise,
                      WeightMode mode) {
  check_shapes(params);
  if (input.cols() != params.in()) throw ShapeError("vardense_apply: input width does not match layer");
  if (mode == WeightMode::mean) {
    Matrix out = input * params.weight_mean;
    out.rowwise() += params.bias_mean;
    return out;
  }
  if (noise.weight.rows() != params.in() || noise.weight.cols() != params.out() ||
      noise.bias.size() != params.out()) {
    throw ShapeError("vardense_apply: noise shape does not match layer");
  }
  const Matrix w = params.weight_mean + weight_std(params).cwiseProduct(noise.weight);
  const RowVector b = params.bias_mean + bias_std(params).cwiseProduct(noise.bias);
  Matrix out = input * w;
  out.rowwise() += b;
  return out;
}

double vardense_kl(const VarDenseParams& params) {
  check_shapes(params);
  const double prior_var = params.prior_std * params.prior_std;
  const double log_p = std::log(params.prior_std);
  double total = 0.0;
  for (Index i = 0; i < params.weight_mean.size(); ++i) {
    total += scalar_kl(params.weight_mean.data()[i], params.weight_log_var.data()[i], prior_var, log_p);
  }
  for (Index i = 0; i < params.bias_mean.size(); ++i) {
    total += scalar_kl(params.bias_mean[i], params.bias_log_var[i], prior_var, log_p);
  }
  return total;
}

VarDenseGrads vardense_backprop(const Matrix& input, const VarDenseParams& params, const VarDenseNoise& noise,
                                WeightMode mode, const Matrix& upstream) {
  check_shapes(params);
  if (upstream.rows() != input.rows() || upstream.cols() != params.out() || input.cols() != params.in()) {
    throw ShapeError("vardense_backprop: inconsistent shapes");
  }
  VarDenseGrads g;
  const Matrix dw = input.transpose() * upstream;
  const RowVector db = upstream.colwise().sum();
  g.weight_mean = dw;
  g.bias_mean = db;
  if (mode == WeightMode::mean) {
    g.input = upstream * params.weight_mean.transpose();
    g.weight_log_var = Matrix::Zero(params.in(), params.out());
    g.bias_log_var = RowVector::Zero(params.out());
    return g;
  }
  const Matrix wstd = weight_std(params);
  const RowVector bstd = bias_std(params);
  const Matrix w = params.weight_mean + wstd.cwiseProduct(noise.weight);
  g.input = upstream * w.transpose();
  // dW/dlv = 0.5 * std * noise inside the clamp range, 0 outside.
  g.weight_log_var = dw.cwiseProduct(wstd).cwiseProduct(noise.weight) * 0.5;
  g.bias_log_var = db.cwiseProduct(bstd).cwiseProduct(noise.bias) * 0.5;
  for (Index i = 0; i < g.weight_log_var.size(); ++i) {
    if (!in_clamp(params.weight_log_var.data()[i])) g.weight_log_var.data()[i] = 0.0;
  }
  for (Index i = 0; i < g.bias_log_var.size(); ++i) {
    if (!in_clamp(params.bias_log_var[i])) g.bias_log_var[i] = 0.0;
  }
  return g;
}

VarDenseGrads vardense_kl_grad(const VarDenseParams& params) {
  check_shapes(params);
  const double prior_var = params.prior_std * params.prior_std;
  VarDenseGrads g;
  g.weight_mean = params.weight_mean / prior_var;
  g.bias_mean = params.bias_mean / prior_var;
  auto dlv = [prior_var](double lv) {
    return in_clamp(lv) ? -0.5 + 0.5 * std::exp(lv) / prior_var : 0.0;
  };
  g.weight_log_var = params.weight_log_var.unaryExpr(dlv);
  g.bias_log_var = params.bias_log_var.unaryExpr(dlv);
  // d/d log p of [log p + (s^2 + m^2) / (2 p^2)] = 1 - (s^2 + m^2) / p^2
  double dlogp = 0.0;
  for (Index i = 0; i < params.weight_mean.size(); ++i) {
    const double m = params.weight_mean.data()[i];
    dlogp += 1.0 - (std::exp(clamp_log_var(params.weight_log_var.data()[i])) + m * m) / prior_var;
  }
  for (Index i = 0; i < params.bias_mean.size(); ++i) {
    const double m = params.bias_mean[i];
    dlogp += 1.0 - (std::exp(clamp_log_var(params.bias_log_var[i])) + m * m) / prior_var;
  }
  g.log_prior_std = dlogp;
  return g;
}

}  // namespace bvr
