#include "bvr/model.hpp"

#include <cmath>

#include "bvr/error.hpp"

namespace bvr {

double LrSchedule::at(int epoch) const {
  return initial * std::pow(factor, static_cast<double>(epoch / every));
}

Index ModelConfig::posterior_width() const noexcept {
  return latent_kind == LatentKind::meanfield ? 2 * latent_dim : latent_dim + tri_count(latent_dim);
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("model config: ") + what);
  };
  require(input_dim >= 1, "input_dim must be >= 1");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  for (const auto* widths : {&encoder_widths, &decoder_widths, &regressor_widths}) {
    for (Index w : *widths) require(w >= 1, "hidden widths must be >= 1");
  }
  require(beta >= 0.0, "beta must be >= 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  require(leaky_slope > 0.0 && leaky_slope < 1.0, "leaky_slope must be in (0, 1)");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(lr.initial > 0.0, "lr.initial must be > 0");
  require(lr.factor > 0.0 && lr.factor <= 1.0, "lr.factor must be in (0, 1]");
  require(lr.every >= 1, "lr.every must be >= 1");
  require(latent_clamp.min < latent_clamp.max, "latent log-variance clamp must satisfy min < max");
  require(weight_prior_std > 0.0, "weight_prior_std must be > 0");
  require(early_stop_patience >= 0, "early_stop_patience must be >= 0");
}

std::string to_string(LatentKind k) { return k == LatentKind::meanfield ? "meanfield" : "fullcov"; }
std::string to_string(LayerKind k) { return k == LayerKind::deterministic ? "deterministic" : "probabilistic"; }

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"input_dim", c.input_dim},
      {"latent_dim", c.latent_dim},
      {"encoder_widths", c.encoder_widths},
      {"decoder_widths", c.decoder_widths},
      {"regressor_widths", c.regressor_widths},
      {"latent_kind", to_string(c.latent_kind)},
      {"layer_kind", to_string(c.layer_kind)},
      {"beta", c.beta},
      {"gamma", c.gamma},
      {"dropout_rate", c.dropout_rate},
      {"leaky_slope", c.leaky_slope},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", {{"initial", c.lr.initial}, {"factor", c.lr.factor}, {"every", c.lr.every}}},
      {"seed", c.seed},
      {"latent_log_var_clamp", {c.latent_clamp.min, c.latent_clamp.max}},
      {"weight_prior_std", c.weight_prior_std},
      {"train_prior", c.train_prior},
      {"weight_log_var_init", c.weight_log_var_init},
      {"beta_scales_weight_kl", c.beta_scales_weight_kl},
      {"early_stop_patience", c.early_stop_patience},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "input_dim") {
        c.input_dim = v.get<Index>();
      } else if (key == "latent_dim") {
        c.latent_dim = v.get<Index>();
      } else if (key == "encoder_widths") {
        c.encoder_widths = v.get<std::array<Index, 3>>();
      } else if (key == "decoder_widths") {
        c.decoder_widths = v.get<std::array<Index, 3>>();
      } else if (key == "regressor_widths") {
        c.regressor_widths = v.get<std::array<Index, 3>>();
      } else if (key == "latent_kind") {
        const auto s = v.get<std::string>();
        if (s == "meanfield") c.latent_kind = LatentKind::meanfield;
        else if (s == "fullcov") c.latent_kind = LatentKind::fullcov;
        else throw ConfigError("latent_kind must be 'meanfield' or 'fullcov'");
      } else if (key == "layer_kind") {
        const auto s = v.get<std::string>();
        if (s == "deterministic") c.layer_kind = LayerKind::deterministic;
        else if (s == "probabilistic") c.layer_kind = LayerKind::probabilistic;
        else throw ConfigError("layer_kind must be 'deterministic' or 'probabilistic'");
      } else if (key == "beta") {
        c.beta = v.get<double>();
      } else if (key == "gamma") {
        c.gamma = v.get<double>();
      } else if (key == "dropout_rate") {
        c.dropout_rate = v.get<double>();
      } else if (key == "leaky_slope") {
        c.leaky_slope = v.get<double>();
      } else if (key == "epochs") {
        c.epochs = v.get<int>();
      } else if (key == "batch_size") {
        c.batch_size = v.get<int>();
      } else if (key == "lr") {
        for (const auto& [lk, lv] : v.items()) {
          if (lk == "initial") c.lr.initial = lv.get<double>();
          else if (lk == "factor") c.lr.factor = lv.get<double>();
          else if (lk == "every") c.lr.every = lv.get<int>();
          else throw ConfigError("unknown key 'lr." + lk + "'");
        }
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "latent_log_var_clamp") {
        const auto pair = v.get<std::array<double, 2>>();
        c.latent_clamp = {pair[0], pair[1]};
      } else if (key == "weight_prior_std") {
        c.weight_prior_std = v.get<double>();
      } else if (key == "train_prior") {
        c.train_prior = v.get<bool>();
      } else if (key == "weight_log_var_init") {
        c.weight_log_var_init = v.get<double>();
      } else if (key == "beta_scales_weight_kl") {
        c.beta_scales_weight_kl = v.get<bool>();
      } else if (key == "early_stop_patience") {
        c.early_stop_patience = v.get<int>();
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

JointLossBreakdown joint_loss(const Matrix& x, const Matrix& x_hat, const Vector& kl_per_sample, const Vector& y,
                              const Vector& y_hat, double beta, double gamma) {
  const Index n = x.rows();
  if (n < 1 || x_hat.rows() != n || x_hat.cols() != x.cols() || kl_per_sample.size() != n || y.size() != n ||
      y_hat.size() != n) {
    throw ShapeError("joint_loss: inconsistent batch shapes");
  }
  JointLossBreakdown b;
  b.reconstruction_mse = (x_hat - x).squaredNorm() / static_cast<double>(x.size());
  b.kl = kl_per_sample.mean();
  b.regression_mse = (y_hat - y).squaredNorm() / static_cast<double>(n);
  b.total = b.reconstruction_mse + beta * b.kl + gamma * b.regression_mse;
  return b;
}

Model Model::build(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config_ = config;
  Rng rng(derive_seed(config.seed, 0));
  StackSpec spec;
  spec.kind = config.layer_kind;
  spec.dropout_rate = config.dropout_rate;
  spec.leaky_slope = config.leaky_slope;
  spec.prior_std = config.weight_prior_std;
  spec.train_prior = config.train_prior;
  spec.weight_log_var_init = config.weight_log_var_init;

  spec.input_dim = config.input_dim;
  spec.hidden.assign(config.encoder_widths.begin(), config.encoder_widths.end());
  spec.output_dim = config.posterior_width();
  m.encoder_ = LayerStack::mlp("encoder", spec, rng);

  spec.input_dim = config.latent_dim;
  spec.hidden.assign(config.decoder_widths.begin(), config.decoder_widths.end());
  spec.output_dim = config.input_dim;
  m.decoder_ = LayerStack::mlp("decoder", spec, rng);

  spec.hidden.assign(config.regressor_widths.begin(), config.regressor_widths.end());
  spec.output_dim = 1;
  m.regressor_ = LayerStack::mlp("regressor", spec, rng);
  return m;
}

PassOptions Model::pass_options(const ForwardOptions& opts) const {
  return {opts.mode, opts.dropout, opts.sample_weights && config_.layer_kind == LayerKind::probabilistic,
          opts.replay};
}

ForwardResult Model::forward(const Matrix& x, const ForwardOptions& opts, Rng& rng) {
  if (x.cols() != config_.input_dim) {
    throw ShapeError("Model::forward: batch has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(config_.input_dim));
  }
  const PassOptions po = pass_options(opts);
  const Index n = x.rows();
  const Index dim = config_.latent_dim;

  ForwardResult r;
  r.posterior = encoder_.forward(x, po, rng);
  r.latent_mean = r.posterior.leftCols(dim);
  posterior_ = r.posterior;
  sampled_ = opts.sample_latent;
  if (sampled_ && !(opts.replay && noise_.rows() == n && noise_.cols() == dim)) {
    noise_.resize(n, dim);
    rng.fill_normal(noise_);
  }

  r.kl_per_sample.resize(n);
  r.z = r.latent_mean;
  if (config_.latent_kind == LatentKind::meanfield) {
    const LogVarClamp clamp = config_.latent_clamp;
    const Matrix lv = r.posterior.middleCols(dim, dim).unaryExpr([clamp](double v) { return clamp.apply(v); });
    const Matrix var = lv.array().exp().matrix();
    r.kl_per_sample =
        -0.5 * (1.0 + lv.array() - r.latent_mean.array().square() - var.array()).matrix().rowwise().sum();
    if (sampled_) r.z.array() += (0.5 * lv.array()).exp() * noise_.array();
  } else {
    const Index tri = tri_count(dim);
    for (Index i = 0; i < n; ++i) {
      const Vector raw = r.posterior.row(i).segment(dim, tri).transpose();
      FullCovPosterior post{r.latent_mean.row(i).transpose(), chol_parameterize(raw, dim)};
      r.kl_per_sample[i] = fullcov_kl(post);
      if (sampled_) r.z.row(i) = fullcov_sample(post, noise_.row(i).transpose()).z.transpose();
    }
  }

  r.reconstruction = decoder_.forward(r.z, po, rng);
  r.prediction = regressor_.forward(r.z, po, rng).col(0);
  return r;
}

void Model::backward_latent(const Matrix& grad_z, double kl_scale) {
  const Index n = posterior_.rows();
  const Index dim = config_.latent_dim;
  Matrix dpost = Matrix::Zero(n, posterior_.cols());
  dpost.leftCols(dim) = grad_z + kl_scale * posterior_.leftCols(dim);

  if (config_.latent_kind == LatentKind::meanfield) {
    const LogVarClamp clamp = config_.latent_clamp;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < dim; ++j) {
        const double lv = posterior_(i, dim + j);
        if (!clamp.inside(lv)) continue;
        double d = kl_scale * 0.5 * (std::exp(lv) - 1.0);
        if (sampled_) d += grad_z(i, j) * 0.5 * std::exp(0.5 * lv) * noise_(i, j);
        dpost(i, dim + j) = d;
      }
    }
  } else {
    const Index tri = tri_count(dim);
    for (Index i = 0; i < n; ++i) {
      const Vector raw = posterior_.row(i).segment(dim, tri).transpose();
      const Matrix chol = chol_parameterize(raw, dim);
      Matrix dchol = kl_scale * Matrix(chol.triangularView<Eigen::Lower>());
      for (Index j = 0; j < dim; ++j) dchol(j, j) -= kl_scale / chol(j, j);
      if (sampled_) {
        dchol += Matrix((grad_z.row(i).transpose() * noise_.row(i)).triangularView<Eigen::Lower>());
      }
      dpost.row(i).segment(dim, tri) = chol_parameterize_backprop(raw, dim, dchol).transpose();
    }
  }
  encoder_.backward(dpost);
}

JointLossBreakdown Model::accumulate_gradients(const Matrix& x, const Vector& y, const ForwardOptions& opts,
                                               Rng& rng, double weight_kl_scale) {
  const ForwardResult r = forward(x, opts, rng);
  const JointLossBreakdown loss =
      joint_loss(x, r.reconstruction, r.kl_per_sample, y, r.prediction, config_.beta, config_.gamma);
  if (!std::isfinite(loss.total)) throw NumericError("non-finite joint loss");

  const double n = static_cast<double>(x.rows());
  const Matrix d_recon = (2.0 / static_cast<double>(x.size())) * (r.reconstruction - x);
  const Matrix d_pred = ((2.0 * config_.gamma / n) * (r.prediction - y)).eval();
  Matrix grad_z = decoder_.backward(d_recon);
  grad_z += regressor_.backward(d_pred);
  backward_latent(grad_z, config_.beta / n);

  if (config_.layer_kind == LayerKind::probabilistic && weight_kl_scale > 0.0) {
    encoder_.accumulate_weight_kl_grad(weight_kl_scale);
    decoder_.accumulate_weight_kl_grad(weight_kl_scale);
    regressor_.accumulate_weight_kl_grad(weight_kl_scale);
  }
  return loss;
}

Vector Model::predict(const Matrix& x) {
  Rng rng(0);
  return forward(x, ForwardOptions::inference(), rng).prediction;
}

Matrix Model::embed(const Matrix& x) {
  Rng rng(0);
  return forward(x, ForwardOptions::inference(), rng).latent_mean;
}

void Model::zero_grads() {
  encoder_.zero_grads();
  decoder_.zero_grads();
  regressor_.zero_grads();
}

std::vector<ParamBlock> Model::parameters() {
  std::vector<ParamBlock> out = encoder_.parameters();
  for (auto* stack : {&decoder_, &regressor_}) {
    auto more = stack->parameters();
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

std::vector<StateTensor> Model::state() {
  std::vector<StateTensor> out = encoder_.state();
  for (auto* stack : {&decoder_, &regressor_}) {
    auto more = stack->state();
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

double Model::weight_kl() const {
  return encoder_.weight_kl() + decoder_.weight_kl() + regressor_.weight_kl();
}

void Model::sync_priors() {
  encoder_.sync_priors();
  decoder_.sync_priors();
  regressor_.sync_priors();
}

}  // namespace bvr
