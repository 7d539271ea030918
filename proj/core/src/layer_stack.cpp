#include "bvr/layer_stack.hpp"

#include <cmath>

#include "bvr/error.hpp"

namespace bvr {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::span<double> span_of(Matrix& m) { return as_span(m); }
std::span<double> span_of(RowVector& v) { return as_span(v); }

}  // namespace

LayerStack LayerStack::mlp(std::string name, const StackSpec& spec, Rng& rng) {
  if (spec.input_dim < 1 || spec.output_dim < 1) throw ConfigError(name + ": input/output widths must be >= 1");
  LayerStack stack(std::move(name));
  auto add_dense = [&](Index in, Index out) {
    if (out < 1) throw ConfigError(stack.name() + ": hidden widths must be >= 1");
    if (spec.kind == LayerKind::deterministic) {
      DenseLayer d;
      d.params = DenseParams::he_uniform(in, out, rng);
      d.grads = DenseParams::zeros(in, out);
      stack.push(std::move(d));
    } else {
      VarDenseLayer v;
      v.params = VarDenseParams::init(in, out, rng, spec.weight_log_var_init, spec.prior_std);
      v.log_prior_std[0] = std::log(spec.prior_std);
      v.train_prior = spec.train_prior;
      stack.push(std::move(v));
    }
  };
  Index in = spec.input_dim;
  for (Index width : spec.hidden) {
    add_dense(in, width);
    BatchNormLayer bn;
    bn.params = BatchNormParams::identity(width);
    stack.push(std::move(bn));
    stack.push(LeakyReluLayer{spec.leaky_slope, {}});
    stack.push(DropoutLayer{spec.dropout_rate, {}});
    in = width;
  }
  add_dense(in, spec.output_dim);
  stack.zero_grads();
  return stack;
}

Matrix LayerStack::forward(const Matrix& input, const PassOptions& opts, Rng& rng) {
  Matrix h = input;
  for (Layer& layer : layers_) {
    h = std::visit(
        Overloaded{
            [&](DenseLayer& l) {
              l.input = h;
              return dense_apply(h, l.params);
            },
            [&](VarDenseLayer& l) {
              l.input = h;
              l.last_mode = opts.sample_weights ? WeightMode::sample : WeightMode::mean;
              if (l.last_mode == WeightMode::sample && !opts.replay) {
                l.noise = VarDenseNoise::draw(l.params.in(), l.params.out(), rng);
              }
              return vardense_apply(h, l.params, l.noise, l.last_mode);
            },
            [&](BatchNormLayer& l) { return batchnorm_apply(h, l.params, opts.mode, &l.cache); },
            [&](LeakyReluLayer& l) {
              l.input = h;
              return leaky_relu(h, l.slope);
            },
            [&](DropoutLayer& l) {
              if (opts.replay && l.mask.rows() == h.rows() && l.mask.cols() == h.cols()) {
                return Matrix(h.cwiseProduct(l.mask));
              }
              DropoutResult r = dropout_apply(h, l.rate, opts.dropout, rng);
              l.mask = std::move(r.mask);
              return std::move(r.output);
            },
        },
        layer);
  }
  return h;
}

Matrix LayerStack::backward(const Matrix& upstream) {
  Matrix g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = std::visit(Overloaded{
                       [&](DenseLayer& l) {
                         DenseGrads d = dense_backprop(l.input, l.params, g);
                         l.grads.weights += d.params.weights;
                         l.grads.bias += d.params.bias;
                         return std::move(d.input);
                       },
                       [&](VarDenseLayer& l) {
                         VarDenseGrads d = vardense_backprop(l.input, l.params, l.noise, l.last_mode, g);
                         l.grads.weight_mean += d.weight_mean;
                         l.grads.weight_log_var += d.weight_log_var;
                         l.grads.bias_mean += d.bias_mean;
                         l.grads.bias_log_var += d.bias_log_var;
                         return std::move(d.input);
                       },
                       [&](BatchNormLayer& l) {
                         BatchNormGrads d = batchnorm_backprop(g, l.params, l.cache);
                         l.grad_scale += d.scale;
                         l.grad_shift += d.shift;
                         return std::move(d.input);
                       },
                       [&](LeakyReluLayer& l) { return leaky_relu_backprop(l.input, g, l.slope); },
                       [&](DropoutLayer& l) { return Matrix(g.cwiseProduct(l.mask)); },
                   },
                   *it);
  }
  return g;
}

void LayerStack::zero_grads() {
  for (Layer& layer : layers_) {
    std::visit(Overloaded{
                   [](DenseLayer& l) {
                     l.grads.weights.setZero(l.params.in(), l.params.out());
                     l.grads.bias.setZero(l.params.out());
                   },
                   [](VarDenseLayer& l) {
                     l.grads.weight_mean.setZero(l.params.in(), l.params.out());
                     l.grads.weight_log_var.setZero(l.params.in(), l.params.out());
                     l.grads.bias_mean.setZero(l.params.out());
                     l.grads.bias_log_var.setZero(l.params.out());
                     l.grads.log_prior_std = 0.0;
                   },
                   [](BatchNormLayer& l) {
                     l.grad_scale.setZero(l.params.width());
                     l.grad_shift.setZero(l.params.width());
                   },
                   [](auto&) {},
               },
               layer);
  }
}

std::vector<ParamBlock> LayerStack::parameters() {
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    std::visit(Overloaded{
                   [&](DenseLayer& l) {
                     out.push_back({prefix + "weights", span_of(l.params.weights), span_of(l.grads.weights)});
                     out.push_back({prefix + "bias", span_of(l.params.bias), span_of(l.grads.bias)});
                   },
                   [&](VarDenseLayer& l) {
                     out.push_back({prefix + "weight_mean", span_of(l.params.weight_mean),
                                    span_of(l.grads.weight_mean)});
                     out.push_back({prefix + "weight_log_var", span_of(l.params.weight_log_var),
                                    span_of(l.grads.weight_log_var)});
                     out.push_back({prefix + "bias_mean", span_of(l.params.bias_mean), span_of(l.grads.bias_mean)});
                     out.push_back({prefix + "bias_log_var", span_of(l.params.bias_log_var),
                                    span_of(l.grads.bias_log_var)});
                     if (l.train_prior) {
                       out.push_back({prefix + "log_prior_std", span_of(l.log_prior_std),
                                      std::span<double>(&l.grads.log_prior_std, 1)});
                     }
                   },
                   [&](BatchNormLayer& l) {
                     out.push_back({prefix + "scale", span_of(l.params.scale), span_of(l.grad_scale)});
                     out.push_back({prefix + "shift", span_of(l.params.shift), span_of(l.grad_shift)});
                   },
                   [](auto&) {},
               },
               layers_[i]);
  }
  return out;
}

std::vector<StateTensor> LayerStack::state() {
  std::vector<StateTensor> out;
  auto add = [&out](std::string name, Matrix& m) { out.push_back({std::move(name), m.rows(), m.cols(), as_span(m)}); };
  auto addv = [&out](std::string name, RowVector& v) { out.push_back({std::move(name), 1, v.size(), as_span(v)}); };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = name_ + "." + std::to_string(i) + ".";
    std::visit(Overloaded{
                   [&](DenseLayer& l) {
                     add(prefix + "weights", l.params.weights);
                     addv(prefix + "bias", l.params.bias);
                   },
                   [&](VarDenseLayer& l) {
                     add(prefix + "weight_mean", l.params.weight_mean);
                     add(prefix + "weight_log_var", l.params.weight_log_var);
                     addv(prefix + "bias_mean", l.params.bias_mean);
                     addv(prefix + "bias_log_var", l.params.bias_log_var);
                     addv(prefix + "log_prior_std", l.log_prior_std);
                   },
                   [&](BatchNormLayer& l) {
                     addv(prefix + "scale", l.params.scale);
                     addv(prefix + "shift", l.params.shift);
                     addv(prefix + "running_mean", l.params.running_mean);
                     addv(prefix + "running_var", l.params.running_var);
                   },
                   [](auto&) {},
               },
               layers_[i]);
  }
  return out;
}

double LayerStack::weight_kl() const {
  double total = 0.0;
  for (const Layer& layer : layers_) {
    if (const auto* v = std::get_if<VarDenseLayer>(&layer)) total += vardense_kl(v->params);
  }
  return total;
}

void LayerStack::accumulate_weight_kl_grad(double scale) {
  for (Layer& layer : layers_) {
    auto* v = std::get_if<VarDenseLayer>(&layer);
    if (v == nullptr) continue;
    const VarDenseGrads g = vardense_kl_grad(v->params);
    v->grads.weight_mean += scale * g.weight_mean;
    v->grads.weight_log_var += scale * g.weight_log_var;
    v->grads.bias_mean += scale * g.bias_mean;
    v->grads.bias_log_var += scale * g.bias_log_var;
    v->grads.log_prior_std += scale * g.log_prior_std;
  }
}

void LayerStack::sync_priors() {
  for (Layer& layer : layers_) {
    if (auto* v = std::get_if<VarDenseLayer>(&layer)) v->params.prior_std = std::exp(v->log_prior_std[0]);
  }
}

void LayerStack::set_weight_log_var(double log_var) {
  for (Layer& layer : layers_) {
    if (auto* v = std::get_if<VarDenseLayer>(&layer)) {
      v->params.weight_log_var.setConstant(log_var);
      v->params.bias_log_var.setConstant(log_var);
    }
  }
}

Index LayerStack::input_dim() const {
  for (const Layer& layer : layers_) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->params.in();
    if (const auto* v = std::get_if<VarDenseLayer>(&layer)) return v->params.in();
  }
  return 0;
}

Index LayerStack::output_dim() const {
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (const auto* d = std::get_if<DenseLayer>(&*it)) return d->params.out();
    if (const auto* v = std::get_if<VarDenseLayer>(&*it)) return v->params.out();
  }
  return 0;
}

}  // namespace bvr
