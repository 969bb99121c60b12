#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "topo/autonet.hpp"

using namespace topo;

namespace {

Matrix make_inputs(const std::vector<std::vector<double>>& rows) {
  Matrix x(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) x(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return x;
}

// Flatten / restore parameters for finite-difference checks.
std::vector<double> flatten(const DenseNet& net) {
  std::vector<double> out;
  for (size_t i = 0; i < net.weights.size(); ++i) {
    out.insert(out.end(), net.weights[i].data.begin(), net.weights[i].data.end());
    out.insert(out.end(), net.biases[i].begin(), net.biases[i].end());
  }
  return out;
}

void restore(DenseNet& net, const std::vector<double>& flat) {
  size_t pos = 0;
  for (size_t i = 0; i < net.weights.size(); ++i) {
    for (double& v : net.weights[i].data) v = flat[pos++];
    for (double& v : net.biases[i]) v = flat[pos++];
  }
}

std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (size_t i = 0; i < g.weights.size(); ++i) {
    out.insert(out.end(), g.weights[i].data.begin(), g.weights[i].data.end());
    out.insert(out.end(), g.biases[i].begin(), g.biases[i].end());
  }
  return out;
}

}  // namespace

TEST_CASE("init_net is deterministic and respects the fan-in bound") {
  const DenseNet a = init_net({2, 25, 25, 2}, 99);
  const DenseNet b = init_net({2, 25, 25, 2}, 99);
  for (size_t i = 0; i < a.weights.size(); ++i) {
    CHECK(a.weights[i].data == b.weights[i].data);
    CHECK(a.biases[i] == b.biases[i]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.widths[i]));
    for (double v : a.weights[i].data) CHECK(std::abs(v) <= bound);
    for (double v : a.biases[i]) CHECK(std::abs(v) <= bound);
  }
  const DenseNet c = init_net({2, 2}, 1);
  CHECK(c.weights[0].rows == 2);
  CHECK(c.weights[0].cols == 2);
  CHECK(c.biases[0].size() == 2);
  CHECK_THROWS_AS(init_net({2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_net({2, 0, 2}, 1), std::invalid_argument);
}

TEST_CASE("forward clamps with ReLU and tracks activation statistics") {
  DenseNet net;
  net.widths = {2, 2};
  net.weights.emplace_back(2, 2);
  net.weights[0](0, 0) = 1.0;
  net.weights[0](1, 1) = 1.0;
  net.biases.push_back({0.0, 0.0});
  // Single linear layer: logits layer is not rectified.
  const ActivationStats lin = forward(net, make_inputs({{-1.0, 2.0}}));
  CHECK(lin.logits()(0, 0) == -1.0);
  CHECK(lin.logits()(0, 1) == 2.0);

  DenseNet deep;
  deep.widths = {2, 2, 2};
  deep.weights.emplace_back(2, 2);
  deep.weights[0](0, 0) = 1.0;
  deep.weights[0](1, 1) = 1.0;
  deep.weights.emplace_back(2, 2);
  deep.weights[1](0, 0) = 1.0;
  deep.weights[1](1, 1) = 1.0;
  deep.biases.push_back({0.0, 0.0});
  deep.biases.push_back({0.0, 0.0});
  const ActivationStats st = forward(deep, make_inputs({{-1.0, 2.0}}));
  CHECK(st.activations[1](0, 0) == 0.0);  // hidden layer rectified
  CHECK(st.activations[1](0, 1) == 2.0);

  // Node with activations {0, 2}: population mean 1, std 1.
  const ActivationStats two = forward(deep, make_inputs({{0.0, 0.0}, {2.0, 0.0}}));
  CHECK(two.mu[1][0] == doctest::Approx(1.0));
  CHECK(two.sigma[1][0] == doctest::Approx(1.0));

  const ActivationStats zero = forward(deep, make_inputs({{0.0, 0.0}, {0.0, 0.0}}));
  CHECK(zero.mu[1][0] == 0.0);
  CHECK(zero.sigma[1][0] == 0.0);

  CHECK_THROWS_AS(forward(deep, Matrix(1, 3)), std::invalid_argument);
}

TEST_CASE("covariance uses the population convention") {
  DenseNet net;
  net.widths = {3, 3};
  net.weights.emplace_back(3, 3);
  for (int i = 0; i < 3; ++i) net.weights[0](i, i) = 1.0;
  net.biases.push_back({0.0, 0.0, 0.0});
  const Matrix x = make_inputs({{1.0, 1.0, -1.0}, {2.0, 1.0, -2.0}, {3.0, 1.0, -3.0}});
  const ActivationStats st = forward(net, x);
  CHECK(covariance(st, {0, 0}, {0, 0}) == doctest::Approx(2.0 / 3.0));  // variance
  CHECK(covariance(st, {0, 0}, {0, 1}) == doctest::Approx(0.0));        // constant partner
  CHECK(covariance(st, {0, 0}, {0, 2}) == doctest::Approx(-2.0 / 3.0));  // cov(v, -v)
  CHECK_THROWS_AS(covariance(st, {0, 0}, {0, 7}), std::invalid_argument);
}

TEST_CASE("cross_entropy matches closed forms") {
  Matrix logits(1, 2);
  const CrossEntropy uniform = cross_entropy(logits, {0});
  CHECK(uniform.loss == doctest::Approx(std::log(2.0)));

  Matrix confident(1, 2);
  confident(0, 0) = 10.0;
  confident(0, 1) = -10.0;
  CHECK(cross_entropy(confident, {0}).loss == doctest::Approx(0.0).epsilon(1e-6));

  Matrix batch(3, 4);
  Rng rng(3);
  for (double& v : batch.data) v = rng.uniform(-2.0, 2.0);
  const CrossEntropy ce = cross_entropy(batch, {1, 3, 0});
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) s += ce.grad(r, c);
    CHECK(s == doctest::Approx(0.0).epsilon(1e-12));  // softmax identity per sample
  }
  CHECK_THROWS_AS(cross_entropy(batch, {1, 4, 0}), std::invalid_argument);
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(8);
  for (const auto& widths :
       {std::vector<int>{2, 4, 2}, std::vector<int>{2, 25, 25, 25, 2}}) {
    DenseNet net = init_net(widths, rng.next_u64());
    const int n = widths.size() == 3 ? 8 : 16;
    Matrix x(n, 2);
    std::vector<int> y;
    for (int r = 0; r < n; ++r) {
      x(r, 0) = rng.uniform(-1.0, 1.0);
      x(r, 1) = rng.uniform(-1.0, 1.0);
      y.push_back(static_cast<int>(rng.below(2)));
    }
    const Gradients g = backward(net, x, y);
    const std::vector<double> flat = flatten(net);
    const std::vector<double> analytic = flatten(g);
    const auto fd = oracle::central_diff_filtered(
        [&](const std::vector<double>& p) {
          DenseNet probe = net;
          restore(probe, p);
          const ActivationStats st = forward(probe, x);
          return cross_entropy(st.logits(), y).loss;
        },
        flat, 1e-5);
    double max_rel = 0.0;
    size_t checked = 0;
    for (size_t i = 0; i < fd.grad.size(); ++i) {
      if (!fd.valid[i]) continue;  // stencil crossed a ReLU kink
      ++checked;
      if (std::abs(fd.grad[i]) < 1e-8 && std::abs(analytic[i]) < 1e-8) continue;
      max_rel = std::max(max_rel, oracle::rel_err(analytic[i], fd.grad[i]));
    }
    CHECK(checked > fd.grad.size() * 9 / 10);
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("backward linearity and zero behavior") {
  DenseNet net = init_net({2, 4, 2}, 5);
  Matrix x(4, 2);
  Rng rng(6);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  const std::vector<int> y{0, 1, 0, 1};

  const Gradients g = backward(net, x, y);
  Gradients extra = zero_gradients(net);
  const Gradients g2 = backward(net, x, y, &extra);
  CHECK(flatten(g) == flatten(g2));  // zero extra changes nothing

  // Externally supplied gradients add exactly.
  extra.weights[0](0, 0) = 2.5;
  const Gradients g3 = backward(net, x, y, &extra);
  CHECK(g3.weights[0](0, 0) == doctest::Approx(g.weights[0](0, 0) + 2.5));
}

TEST_CASE("stats_param_backward matches finite differences with frozen routing") {
  Rng rng(12);
  DenseNet net = init_net({2, 6, 4, 2}, 77);
  const int n = 12;
  Matrix x(n, 2);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);

  // Random upstream gradients on every layer's mu and sigma.
  std::vector<std::vector<double>> gmu, gsg;
  for (int w : net.widths) {
    std::vector<double> m(static_cast<size_t>(w)), s(static_cast<size_t>(w));
    for (double& v : m) v = rng.uniform(-1.0, 1.0);
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    gmu.push_back(m);
    gsg.push_back(s);
  }

  const ActivationStats cache = forward(net, x);
  const Gradients g = stats_param_backward(net, cache, gmu, gsg);

  const auto loss_of = [&](const DenseNet& probe) {
    const ActivationStats st = forward(probe, x);
    double loss = 0.0;
    for (size_t l = 0; l < st.mu.size(); ++l)
      for (size_t j = 0; j < st.mu[l].size(); ++j)
        loss += gmu[l][j] * st.mu[l][j] + gsg[l][j] * st.sigma[l][j];
    return loss;
  };
  const std::vector<double> flat = flatten(net);
  const auto fd = oracle::central_diff(
      [&](const std::vector<double>& p) {
        DenseNet probe = net;
        restore(probe, p);
        return loss_of(probe);
      },
      flat, 1e-6);
  const std::vector<double> analytic = flatten(g);
  double max_rel = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) {
    if (std::abs(fd[i]) < 1e-7 && std::abs(analytic[i]) < 1e-7) continue;
    max_rel = std::max(max_rel, oracle::rel_err(analytic[i], fd[i]));
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("adam first step moves by about the learning rate") {
  DenseNet net = init_net({2, 3, 2}, 4);
  const DenseNet before = net;
  Gradients g = zero_gradients(net);
  for (auto& w : g.weights)
    for (double& v : w.data) v = 0.37;
  for (auto& b : g.biases)
    for (double& v : b) v = -1.4;
  AdamState state = init_adam(net);
  TrainConfig cfg;
  adam_step(net, g, state, cfg);
  for (size_t i = 0; i < net.weights.size(); ++i)
    for (size_t k = 0; k < net.weights[i].data.size(); ++k) {
      const double delta = std::abs(net.weights[i].data[k] - before.weights[i].data[k]);
      CHECK(delta == doctest::Approx(cfg.learning_rate).epsilon(1e-6));
    }

  // Zero gradient leaves parameters untouched.
  DenseNet net2 = init_net({2, 3, 2}, 4);
  const DenseNet before2 = net2;
  AdamState state2 = init_adam(net2);
  adam_step(net2, zero_gradients(net2), state2, cfg);
  for (size_t i = 0; i < net2.weights.size(); ++i)
    CHECK(net2.weights[i].data == before2.weights[i].data);
}

TEST_CASE("adam with zero betas reduces to sign-gradient descent") {
  DenseNet net = init_net({2, 3, 2}, 9);
  const DenseNet before = net;
  Gradients g = zero_gradients(net);
  Rng rng(10);
  for (auto& w : g.weights)
    for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
  AdamState state = init_adam(net);
  TrainConfig cfg;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  cfg.epsilon = 1e-300;
  adam_step(net, g, state, cfg);
  for (size_t i = 0; i < net.weights.size(); ++i)
    for (size_t k = 0; k < net.weights[i].data.size(); ++k) {
      const double grad = g.weights[i].data[k];
      if (grad == 0.0) continue;
      const double want = before.weights[i].data[k] - cfg.learning_rate * (grad > 0 ? 1.0 : -1.0);
      CHECK(net.weights[i].data[k] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("checkpoints round-trip") {
  const DenseNet net = init_net({2, 25, 25, 2}, 123);
  const std::string path = "checkpoint_roundtrip.json";
  save_checkpoint(net, path);
  const DenseNet back = load_checkpoint(path);
  CHECK(back.widths == net.widths);
  CHECK(back.init_seed == net.init_seed);
  for (size_t i = 0; i < net.weights.size(); ++i) {
    CHECK(back.weights[i].data == net.weights[i].data);
    CHECK(back.biases[i] == net.biases[i]);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("does_not_exist.json"), std::runtime_error);
}

TEST_CASE("dead units contribute no gradient through activations") {
  // Force the first hidden node dead: strongly negative bias.
  DenseNet net = init_net({2, 3, 2}, 21);
  net.biases[0][0] = -100.0;
  Matrix x(6, 2);
  Rng rng(22);
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  const ActivationStats st = forward(net, x);
  CHECK(st.mu[1][0] == 0.0);
  CHECK(st.sigma[1][0] == 0.0);
  const Gradients g = backward(net, x, {0, 1, 0, 1, 0, 1});
  // Incoming weights of the dead node receive zero gradient.
  CHECK(g.weights[0](0, 0) == 0.0);
  CHECK(g.weights[0](1, 0) == 0.0);
  CHECK(g.biases[0][0] == 0.0);
}
