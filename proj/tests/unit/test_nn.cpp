#include <doctest.h>

#include <cmath>

#include "bvr/error.hpp"
#include "bvr/gradient_check.hpp"
#include "bvr/layer_stack.hpp"
#include "bvr/nn.hpp"
#include "test_support.hpp"

using namespace bvr;
using bvr::test::MixedLoss;

namespace {

LayerStack single(Layer layer) {
  LayerStack s("net");
  s.push(std::move(layer));
  s.zero_grads();
  return s;
}

}  // namespace

TEST_SUITE("nn-core") {
  TEST_CASE("dense forward examples") {
    DenseParams p = DenseParams::zeros(2, 2);
    p.weights = Matrix::Identity(2, 2);
    CHECK(dense_apply(Matrix::Identity(2, 2), p) == Matrix::Identity(2, 2));

    p.weights.setZero();
    p.bias << 1.0, 2.0;
    Rng rng(1);
    const Matrix out = dense_apply(test::random_matrix(3, 2, rng), p);
    for (Index i = 0; i < 3; ++i) {
      CHECK(out(i, 0) == 1.0);
      CHECK(out(i, 1) == 2.0);
    }

    p.weights << 1.0, 0.0, 0.0, 3.0;
    p.bias << 0.5, 0.5;
    Matrix x(1, 2);
    x << 1.0, 2.0;
    const Matrix y = dense_apply(x, p);
    CHECK(y(0, 0) == 1.5);
    CHECK(y(0, 1) == 6.5);

    CHECK_THROWS_AS(dense_apply(Matrix::Zero(1, 3), p), ShapeError);
    CHECK_THROWS_AS(dense_apply(Matrix::Zero(1, 3), p), ConfigError);
  }

  TEST_CASE("dense backprop examples") {
    Rng rng(2);
    DenseParams p = DenseParams::he_uniform(3, 2, rng);
    const Matrix x = test::random_matrix(4, 3, rng);
    DenseGrads g = dense_backprop(x, p, Matrix::Zero(4, 2));
    CHECK(g.input.isZero(0.0));
    CHECK(g.params.weights.isZero(0.0));
    CHECK(g.params.bias.isZero(0.0));

    DenseParams s = DenseParams::zeros(1, 1);
    s.weights(0, 0) = 3.0;
    Matrix xi(1, 1);
    xi(0, 0) = 2.0;
    Matrix up(1, 1);
    up(0, 0) = 1.0;
    g = dense_backprop(xi, s, up);
    CHECK(g.params.weights(0, 0) == 2.0);
    CHECK(g.input(0, 0) == 3.0);
    CHECK(g.params.bias[0] == 1.0);
  }

  TEST_CASE("dense gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      DenseLayer d;
      d.params = DenseParams::he_uniform(3, 2, rng);
      d.grads = DenseParams::zeros(3, 2);
      LayerStack net = single(d);
      MixedLoss loss;
      const auto rep = gradient_check(net, test::random_matrix(4, 3, rng), std::ref(loss), {}, rng);
      CHECK(rep.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("batch norm train mode standardizes") {
    Rng rng(3);
    Matrix x = test::random_matrix(64, 3, rng, 4.0);
    x.col(1).array() += 7.0;
    BatchNormParams p = BatchNormParams::identity(3);
    const Matrix out = batchnorm_apply(x, p, Mode::train);
    for (Index j = 0; j < 3; ++j) {
      const double mean = out.col(j).mean();
      const double var = (out.col(j).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-6);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK((p.running_var.array() >= 0.0).all());

    Matrix constant = Matrix::Constant(8, 1, 4.2);
    BatchNormParams q = BatchNormParams::identity(1);
    q.shift[0] = 0.7;
    const Matrix c = batchnorm_apply(constant, q, Mode::train);
    for (Index i = 0; i < 8; ++i) CHECK(c(i, 0) == doctest::Approx(0.7).epsilon(1e-12));

    BatchNormParams one = BatchNormParams::identity(2);
    CHECK_THROWS_AS(batchnorm_apply(Matrix::Zero(1, 2), one, Mode::train), DataError);
  }

  TEST_CASE("batch norm infer mode formula") {
    BatchNormParams p = BatchNormParams::identity(1);
    p.scale[0] = 2.0;
    p.shift[0] = 1.0;
    p.epsilon = 1e-300;
    Matrix x(1, 1);
    x(0, 0) = 0.5;
    CHECK(batchnorm_apply(x, p, Mode::infer)(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  }

  TEST_CASE("batch norm running statistics follow the moving average") {
    BatchNormParams p = BatchNormParams::identity(1);
    Matrix x(4, 1);
    x << 1.0, 2.0, 3.0, 6.0;
    batchnorm_apply(x, p, Mode::train);
    const double unbiased_var = ((x.array() - 3.0).square().sum()) / 3.0;
    CHECK(p.running_mean[0] == doctest::Approx(0.99 * 0.0 + 0.01 * 3.0));
    CHECK(p.running_var[0] == doctest::Approx(0.99 * 1.0 + 0.01 * unbiased_var));
  }

  TEST_CASE("batch norm backprop") {
    Rng rng(4);
    const Matrix x = test::random_matrix(6, 3, rng);

    BatchNormParams zero_scale = BatchNormParams::identity(3);
    zero_scale.scale.setZero();
    BatchNormCache cache;
    batchnorm_apply(x, zero_scale, Mode::train, &cache);
    CHECK(batchnorm_backprop(test::random_matrix(6, 3, rng), zero_scale, cache).input.isZero(0.0));

    BatchNormParams p = BatchNormParams::identity(3);
    batchnorm_apply(x, p, Mode::train, &cache);
    const auto g = batchnorm_backprop(test::random_matrix(6, 3, rng), p, cache);
    for (Index j = 0; j < 3; ++j) CHECK(std::abs(g.input.col(j).sum()) < 1e-12);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r(100 + seed);
      BatchNormLayer bn;
      bn.params = BatchNormParams::identity(3);
      r.fill_normal(bn.params.scale);
      r.fill_normal(bn.params.shift);
      LayerStack net = single(bn);
      MixedLoss loss;
      PassOptions train;
      train.mode = Mode::train;
      CHECK(gradient_check(net, test::random_matrix(5, 3, r), std::ref(loss), train, r).max_rel_error < 1e-4);
      PassOptions infer;
      std::get<BatchNormLayer>(net.layers()[0]).params.running_var = RowVector::Constant(3, 1.7);
      CHECK(gradient_check(net, test::random_matrix(5, 3, r), std::ref(loss), infer, r).max_rel_error < 1e-4);
    }
  }

  TEST_CASE("leaky relu") {
    Matrix x(1, 3);
    x << 0.0, -1.0, 3.0;
    const Matrix y = leaky_relu(x, 0.2);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(y(0, 2) == 3.0);
    CHECK(leaky_relu(x, 0.7)(0, 2) == 3.0);
    CHECK_THROWS_AS(leaky_relu(x, 1.0), ConfigError);
    CHECK_THROWS_AS(leaky_relu(x, 0.0), ConfigError);

    const Matrix g = leaky_relu_backprop(x, Matrix::Ones(1, 3), 0.2);
    CHECK(g(0, 1) == 0.2);
    CHECK(g(0, 2) == 1.0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(200 + seed);
      LayerStack net = single(LeakyReluLayer{0.2, {}});
      MixedLoss loss;
      const Matrix in = test::away_from_zero(test::random_matrix(4, 3, rng));
      CHECK(gradient_check(net, in, std::ref(loss), {}, rng).max_rel_error < 1e-4);
    }
  }

  TEST_CASE("dropout") {
    Rng rng(5);
    const Matrix x = test::random_matrix(3, 4, rng);
    DropoutResult r = dropout_apply(x, 0.0, true, rng);
    CHECK(r.output == x);
    CHECK(r.mask == Matrix::Ones(3, 4));
    CHECK(dropout_apply(x, 0.3, false, rng).output == x);

    Rng a(9);
    Rng b(9);
    const DropoutResult ra = dropout_apply(x, 0.5, true, a);
    const DropoutResult rb = dropout_apply(x, 0.5, true, b);
    CHECK(ra.mask == rb.mask);
    CHECK(ra.output == rb.output);
    for (Index i = 0; i < ra.mask.size(); ++i) {
      const double m = ra.mask.data()[i];
      CHECK((m == 0.0 || m == 2.0));
    }

    CHECK_THROWS_AS(dropout_apply(x, 1.0, true, rng), ConfigError);
    CHECK_THROWS_AS(dropout_apply(x, -0.1, true, rng), ConfigError);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r2(300 + seed);
      LayerStack net = single(DropoutLayer{0.3, {}});
      MixedLoss loss;
      PassOptions on;
      on.dropout = true;
      CHECK(gradient_check(net, test::random_matrix(4, 3, r2), std::ref(loss), on, r2).max_rel_error < 1e-4);
    }
  }

  TEST_CASE("inverted dropout preserves the expectation") {
    Rng rng(6);
    Matrix x(1, 3);
    x << 1.5, -2.0, 0.25;
    const int passes = 100000;
    const double rate = 0.1;
    Matrix sum = Matrix::Zero(1, 3);
    for (int t = 0; t < passes; ++t) sum += dropout_apply(x, rate, true, rng).output;
    const Matrix mean = sum / passes;
    for (Index j = 0; j < 3; ++j) {
      // Var[x * mask] = x^2 * rate / (1 - rate)
      const double se = std::abs(x(0, j)) * std::sqrt(rate / (1.0 - rate) / passes);
      CHECK(std::abs(mean(0, j) - x(0, j)) < 3.0 * se);
    }
  }

  TEST_CASE("adam") {
    std::vector<double> params{1.0, -2.0, 3.0};
    const std::vector<double> zeros(3, 0.0);
    AdamState state(3);
    for (int i = 0; i < 50; ++i) adam_step(params, zeros, state, 1e-2);
    CHECK(params == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(state.step_count == 50);

    // First step: m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
    std::vector<double> p1{0.5};
    const std::vector<double> g1{0.37};
    AdamState s1(1);
    adam_step(p1, g1, s1, 1e-3);
    CHECK(p1[0] == doctest::Approx(0.5 - 1e-3 * 0.37 / (0.37 + 1e-8)).epsilon(1e-14));
    CHECK(s1.step_count == 1);
    CHECK(s1.second_moment[0] >= 0.0);

    // Convex quadratic 0.5 * ||p - c||^2.
    std::vector<double> p{4.0, -1.0};
    const std::vector<double> c{1.0, 2.0};
    AdamState sq(2);
    auto loss = [&] { return 0.5 * ((p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1])); };
    const double before = loss();
    for (int i = 0; i < 2; ++i) {
      const std::vector<double> g{p[0] - c[0], p[1] - c[1]};
      adam_step(p, g, sq, 0.1);
    }
    CHECK(loss() < before);

    std::vector<double> bad{1.0};
    AdamState sb(1);
    CHECK_THROWS_AS(adam_step(bad, std::vector<double>{std::nan("")}, sb, 1e-3), NumericError);
    CHECK(bad[0] == 1.0);
    CHECK_THROWS_AS(adam_step(bad, std::vector<double>{1.0}, sb, 0.0), ConfigError);
  }

  TEST_CASE("gradient check harness") {
    Rng rng(7);
    DenseLayer d;
    d.params = DenseParams::he_uniform(3, 1, rng);
    d.grads = DenseParams::zeros(3, 1);
    LayerStack linear = single(d);
    auto squared = [](const Matrix& out, Matrix& grad) {
      grad = out;
      return 0.5 * out.squaredNorm();
    };
    GradCheckOptions exact;
    exact.epsilon = 1e-3;
    CHECK(gradient_check(linear, test::random_matrix(5, 3, rng), squared, {}, rng, exact).max_rel_error < 1e-8);

    StackSpec spec;
    spec.input_dim = 4;
    spec.hidden = {5, 4, 3};
    spec.output_dim = 2;
    spec.dropout_rate = 0.2;
    LayerStack deep = LayerStack::mlp("deep", spec, rng);
    PassOptions train;
    train.mode = Mode::train;
    train.dropout = true;
    MixedLoss loss;
    const Matrix x = test::random_matrix(8, 4, rng);
    const auto ok = gradient_check(deep, x, std::ref(loss), train, rng);
    CHECK(ok.max_rel_error < 1e-4);
    CHECK(ok.checked > 0);

    GradCheckOptions corrupted;
    corrupted.analytic_scale = 1.01;
    CHECK(gradient_check(deep, x, std::ref(loss), train, rng, corrupted).max_rel_error > 1e-3);
  }

  TEST_CASE("fixed seed gives bit-identical passes") {
    StackSpec spec;
    spec.input_dim = 4;
    spec.hidden = {6, 5};
    spec.output_dim = 1;
    Rng init_a(1);
    Rng init_b(1);
    LayerStack a = LayerStack::mlp("a", spec, init_a);
    LayerStack b = LayerStack::mlp("a", spec, init_b);
    Rng data(2);
    const Matrix x = test::random_matrix(10, 4, data);
    PassOptions train;
    train.mode = Mode::train;
    train.dropout = true;
    Rng ra(3);
    Rng rb(3);
    const Matrix oa = a.forward(x, train, ra);
    const Matrix ob = b.forward(x, train, rb);
    CHECK(oa == ob);
    CHECK(all_finite(oa));
    CHECK(a.backward(oa) == b.backward(ob));
  }
}
